//! CLT at an equilibrium: `η_n = (λ(y*) − x_n)/√a(n)` is asymptotically
//! Gaussian while `υ_n = (y_n − y*)/√a(n)` vanishes.

use twoscale_sa::engine::InitialCondition;
use twoscale_sa::model::builtin;
use twoscale_sa::schedules::SchedulePair;
use twoscale_sa::verify::{run_clt_experiment, EnsembleSetup, Tolerances};

fn main() -> twoscale_sa::Result<()> {
    let ens = EnsembleSetup {
        init: InitialCondition::new(&[0.0], &[0.0], 0),
        trajectories: 1000,
        seed: 7,
    };
    let pair = SchedulePair::reference();
    let report = run_clt_experiment(
        &builtin::p1(),
        &pair,
        &[0.0],
        &[1_000, 10_000, 50_000],
        8.0,
        &ens,
        &Tolerances::default(),
    )?;
    for r in &report.records {
        println!(
            "n = {:>6}: Var eta {:.4}, E|upsilon|^2 {:.4e}, excess kurtosis {:+.3}",
            r.n,
            r.eta_covariance[0][0],
            r.upsilon_second_moment,
            r.eta_normality[0].excess_kurtosis.unwrap_or(0.0)
        );
    }
    println!(
        "eta covariance vs limit: {:.4} vs {:.4}; passed {}",
        report.eta_comparison.empirical_covariance[0][0],
        report.eta_comparison.theoretical_covariance[0][0],
        report.passed
    );
    Ok(())
}
