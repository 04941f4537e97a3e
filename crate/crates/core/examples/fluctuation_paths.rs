//! Fast and slow fluctuation paths of one P1 trajectory at anchor 10⁴.

use twoscale_sa::engine::{simulate, InitialCondition};
use twoscale_sa::fluct::{
    fast_fluctuation, required_horizon, slow_fluctuation, uniform_grid, SlowVariant,
};
use twoscale_sa::model::builtin;
use twoscale_sa::schedules::{Clock, SchedulePair};

fn main() -> twoscale_sa::Result<()> {
    let spec = builtin::p1();
    let pair = SchedulePair::reference();
    let anchor = 10_000;
    let window = 4.0;
    let end = required_horizon(&pair, Clock::Slow, &[anchor], window)?;
    let traj = simulate(
        &spec,
        &pair,
        0,
        end,
        &InitialCondition::new(&[0.0], &[0.0], 0),
        3,
        false,
    )?;

    let u = fast_fluctuation(&traj, &spec, &pair, anchor, window)?;
    let w = slow_fluctuation(&traj, &spec, &pair, anchor, window, SlowVariant::Slow, 16)?;
    println!(
        "fast window: {} knots, slow window: {} knots",
        u.knot_indices.len(),
        w.knot_indices.len()
    );
    println!("{:>6} {:>10} {:>10}", "t", "u(t)", "w(t)");
    for t in uniform_grid(window, 8) {
        println!(
            "{t:>6.2} {:>10.5} {:>10.5}",
            u.value_at(t)[0],
            w.value_at(t)[0]
        );
    }
    Ok(())
}
