//! Coupled fast/slow FCLT check on P1 with a small ensemble; writes the
//! report, grid CSV and variance-band SVG under `target/fclt_verification`.

use std::path::Path;

use twoscale_sa::cli::write_report;
use twoscale_sa::engine::InitialCondition;
use twoscale_sa::model::builtin;
use twoscale_sa::schedules::SchedulePair;
use twoscale_sa::verify::{run_fclt_experiment, EnsembleSetup, Tolerances, WindowSetup};

fn main() -> twoscale_sa::Result<()> {
    let spec = builtin::p1();
    let pair = SchedulePair::reference();
    let ens = EnsembleSetup {
        init: InitialCondition::new(&[0.0], &[0.0], 0),
        trajectories: 500,
        seed: 7,
    };
    let win = WindowSetup {
        anchors: vec![2_000, 10_000],
        ..Default::default()
    };
    let report = run_fclt_experiment(&spec, &pair, &ens, &win, &Tolerances::default())?;
    for a in &report.anchors {
        let r = &a.window_end;
        println!(
            "anchor {}: empirical {:?}, theory {:?}, rel error {:.3} (threshold {:.3})",
            a.anchor,
            r.empirical_covariance,
            r.theoretical_covariance,
            r.rel_frobenius_error,
            r.threshold
        );
    }
    for c in &report.checks {
        println!("{:<24} {}", c.name, if c.passed { "pass" } else { "FAIL" });
    }
    write_report(&report, Path::new("target/fclt_verification"), true)?;
    Ok(())
}
