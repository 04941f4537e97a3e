//! Step-size validation and the two algorithmic clocks.

use twoscale_sa::cli::validation_table;
use twoscale_sa::schedules::{validate_pair, SchedulePair, StepSchedule};

fn main() -> twoscale_sa::Result<()> {
    let pair = SchedulePair::reference();
    let report = validate_pair(&pair, 1_000_000, 1e-3)?;
    print!("{}", validation_table(&report));

    let table = pair.tabulate(200_000)?;
    for n in [1_000, 10_000, 100_000] {
        let end = table.fast_clock.window_end(n, 4.0)?;
        let back = table.fast_clock.lookback(n, 4.0)?;
        println!(
            "n = {n:>6}: t_fast = {:>9.3}, t_slow = {:>7.3}, fast window [n, {end}], lookback to {back}",
            table.fast_clock.time(n),
            table.slow_clock.time(n),
        );
    }

    // a(n) = C/(n+1) has 1/a(n+1) − 1/a(n) = 1/C exactly.
    for c in [0.25, 0.5, 0.9] {
        let phi = StepSchedule::power_law(c, 1.0).phi_limit(1_000_000)?;
        println!("C = {c}: phi ~ {:.8} (1/C = {:.8})", phi.value, 1.0 / c);
    }
    let same = SchedulePair::new(
        StepSchedule::power_law(0.9, 0.6),
        StepSchedule::power_law(0.9, 0.6),
    );
    let v = validate_pair(&same, 100_000, 1e-3)?;
    println!("a = b: ordering assumption holds? {}", v.flags.a1_ordering);
    Ok(())
}
