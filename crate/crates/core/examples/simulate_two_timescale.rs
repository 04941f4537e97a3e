//! A single P2 run: coupled iterates driven by a controlled two-state chain.

use twoscale_sa::engine::{simulate, InitialCondition};
use twoscale_sa::model::{builtin, AveragedFields};
use twoscale_sa::schedules::SchedulePair;

fn main() -> twoscale_sa::Result<()> {
    let spec = builtin::p2();
    let pair = SchedulePair::reference();
    let init = InitialCondition::new(&[0.5], &[1.0], 0);
    let traj = simulate(&spec, &pair, 0, 200_000, &init, 11, true)?;

    println!(
        "max recursion residual: {:.2e}",
        traj.recursion_error(&spec, &pair)?
    );
    let fields = AveragedFields::new(&spec);
    for n in [0, 1_000, 10_000, 100_000, 200_000] {
        let (x, y) = (traj.x(n)[0], traj.y(n)[0]);
        let lam = fields.lambda(&[y])?[0];
        println!(
            "n = {n:>6}: x = {x:>9.5}, y = {y:>9.5}, lambda(y) = {lam:>9.5}, state = {}",
            traj.state(n)
        );
    }
    let visits = traj.states().iter().filter(|&&s| s == 1).count();
    println!(
        "fraction of time in state 1: {:.4}",
        visits as f64 / traj.states().len() as f64
    );
    Ok(())
}
