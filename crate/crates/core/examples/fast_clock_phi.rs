//! Harmonic fast steps `a(n) = 0.9/(n+1)` give `φ = 1/0.9`: the fast law
//! picks up the drift shift `φ/2` and the slow fluctuations collapse.

use twoscale_sa::engine::InitialCondition;
use twoscale_sa::model::builtin;
use twoscale_sa::schedules::{validate_pair, SchedulePair, StepSchedule};
use twoscale_sa::verify::{
    run_theorem3_experiment, select_experiment, EnsembleSetup, ExperimentKind, Tolerances,
    WindowSetup,
};

fn main() -> twoscale_sa::Result<()> {
    let pair = SchedulePair::new(
        StepSchedule::power_law(0.9, 1.0),
        StepSchedule::power_law(0.3, 1.6),
    );
    let validation = validate_pair(&pair, 1_000_000, 1e-3)?;
    let ExperimentKind::FastClock { phi } = select_experiment(&validation) else {
        unreachable!("harmonic steps have phi = 1/C");
    };
    println!("phi = {phi:.6}");

    let ens = EnsembleSetup {
        init: InitialCondition::new(&[0.0], &[0.0], 0),
        trajectories: 500,
        seed: 5,
    };
    let win = WindowSetup {
        anchors: vec![1_000, 10_000],
        ..Default::default()
    };
    let report = run_theorem3_experiment(
        &builtin::p1(),
        &pair,
        phi,
        &ens,
        &win,
        &Tolerances::default(),
    )?;
    for a in &report.anchors {
        println!(
            "anchor {}: Var u(T) {:.4} vs {:.4}, E|w(T)|^2 = {:.3e}",
            a.anchor,
            a.fast_window_end.empirical_covariance[0][0],
            a.fast_window_end.theoretical_covariance[0][0],
            a.slow_second_moment
        );
    }
    println!("passed: {}", report.passed);
    Ok(())
}
