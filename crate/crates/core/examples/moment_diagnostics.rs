//! Fourth moments of `u_n` and `x_n` at growing checkpoints.

use twoscale_sa::engine::InitialCondition;
use twoscale_sa::model::builtin;
use twoscale_sa::schedules::SchedulePair;
use twoscale_sa::verify::{run_moment_check, EnsembleSetup};

fn main() -> twoscale_sa::Result<()> {
    let pair = SchedulePair::reference();
    for spec in [builtin::p1(), builtin::p2()] {
        let ens = EnsembleSetup {
            init: InitialCondition::new(&[0.0], &[0.0], 0),
            trajectories: 1000,
            seed: 3,
        };
        let report = run_moment_check(&spec, &pair, &ens, &[1_000, 10_000, 30_000])?;
        println!("{}:", spec.name);
        for c in &report.checkpoints {
            println!(
                "  n = {:>6}: E|u|^4 = {:.4} ± {:.4}, E|x|^4 = {:.3e} ± {:.1e}",
                c.n, c.u4, c.u4_se, c.x4, c.x4_se
            );
        }
        println!("  bounded: {}", report.bounded());
    }
    Ok(())
}
