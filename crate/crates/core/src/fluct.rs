//! Scaled fluctuation paths and their comparison ODEs.
//!
//! For an anchor `n` and window `T` the fast path is
//! `u_j = (λ(y_j) − x_j)/√a(j)` on the fast-clock knots `j ∈ [n, m^f(n)]`.
//! The slow path is `w_j = (y_j − y^n(τ_j))/√a(j)` where `y^n` solves the
//! averaged slow ODE from `y_n`, either on the slow clock (`ẏ = f̄(y)`) or,
//! when `φ ≠ 0`, on the fast clock (`ẏ = ε_n f̄(y)`, `ε_n = b(n)/a(n)`).
//! Paths are linear between knots.

use std::io::Write;

use serde::Serialize;

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{AveragedFields, ProblemSpec};
use crate::ode::rk4_through;
use crate::schedules::{Clock, ClockTable, PairTable, SchedulePair};

pub const DEFAULT_SUBSTEPS: usize = 16;
pub const DEFAULT_GRID_POINTS: usize = 64;

/// `points` equally spaced times covering `[0, window]`.
pub fn uniform_grid(window: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![window];
    }
    (0..points)
        .map(|k| window * k as f64 / (points - 1) as f64)
        .collect()
}

/// Which ODE a comparison solution follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonKind {
    /// `ẋ = h̄(x, y_n)` on the fast clock.
    FastFrozen,
    /// `ẏ = f̄(y)` on the slow clock.
    SlowAveraged,
    /// `ẏ = ε_n f̄(y)` on the fast clock.
    SlowOnFastClock,
}

impl ComparisonKind {
    pub fn clock(self) -> Clock {
        match self {
            ComparisonKind::SlowAveraged => Clock::Slow,
            _ => Clock::Fast,
        }
    }
}

/// Which clock the slow fluctuation is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowVariant {
    Slow,
    Fast,
}

impl SlowVariant {
    pub fn comparison(self) -> ComparisonKind {
        match self {
            SlowVariant::Slow => ComparisonKind::SlowAveraged,
            SlowVariant::Fast => ComparisonKind::SlowOnFastClock,
        }
    }
}

fn clock_of(table: &PairTable, clock: Clock) -> &ClockTable {
    match clock {
        Clock::Fast => &table.fast_clock,
        Clock::Slow => &table.slow_clock,
    }
}

/// Knot indices of a window together with their time offsets from the anchor.
///
/// A full plan lists every knot in `[n, m(n)]`. A grid plan lists only the
/// knot pairs bracketing each output grid time, which is all that grid
/// evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub clock: Clock,
    pub anchor: usize,
    pub window: f64,
    pub end: usize,
    pub knots: Vec<usize>,
    pub offsets: Vec<f64>,
}

impl WindowPlan {
    pub fn full(table: &PairTable, clock: Clock, anchor: usize, window: f64) -> Result<Self> {
        let ct = clock_of(table, clock);
        let end = ct.window_end(anchor, window)?;
        let knots: Vec<usize> = (anchor..=end).collect();
        Ok(Self::with_knots(ct, clock, anchor, window, end, knots))
    }

    pub fn grid(
        table: &PairTable,
        clock: Clock,
        anchor: usize,
        window: f64,
        grid: &[f64],
    ) -> Result<Self> {
        let ct = clock_of(table, clock);
        let end = ct.window_end(anchor, window)?;
        let mut knots = vec![anchor];
        for &t in grid {
            let j = ct.knot_interval(anchor, t, end);
            knots.push(j);
            knots.push((j + 1).min(end));
        }
        knots.sort_unstable();
        knots.dedup();
        Ok(Self::with_knots(ct, clock, anchor, window, end, knots))
    }

    fn with_knots(
        ct: &ClockTable,
        clock: Clock,
        anchor: usize,
        window: f64,
        end: usize,
        knots: Vec<usize>,
    ) -> Self {
        let t0 = ct.time(anchor);
        let offsets = knots.iter().map(|&j| ct.time(j) - t0).collect();
        Self {
            clock,
            anchor,
            window,
            end,
            knots,
            offsets,
        }
    }
}

/// Iterates available at (some) indices.
pub trait IterateSource {
    fn x_at(&self, n: usize) -> Result<&[f64]>;
    fn y_at(&self, n: usize) -> Result<&[f64]>;
}

fn outside(n: usize, first: usize, last: usize) -> Error {
    Error::WindowOutOfRange {
        start: n,
        end: n,
        first,
        last,
    }
}

impl IterateSource for Trajectory {
    fn x_at(&self, n: usize) -> Result<&[f64]> {
        if !self.contains(n) {
            return Err(outside(n, self.n_start, self.n_end));
        }
        Ok(self.x(n))
    }

    fn y_at(&self, n: usize) -> Result<&[f64]> {
        if !self.contains(n) {
            return Err(outside(n, self.n_start, self.n_end));
        }
        Ok(self.y(n))
    }
}

/// Iterates recorded at a sorted set of indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CapturedIterates {
    pub d1: usize,
    pub d2: usize,
    pub indices: Vec<usize>,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl CapturedIterates {
    pub fn new(d1: usize, d2: usize) -> Self {
        Self {
            d1,
            d2,
            ..Default::default()
        }
    }

    /// Appends the iterate at `n`; indices must arrive in increasing order.
    pub fn push(&mut self, n: usize, x: &[f64], y: &[f64]) {
        debug_assert!(self.indices.last().is_none_or(|&l| l < n));
        self.indices.push(n);
        self.xs.extend_from_slice(x);
        self.ys.extend_from_slice(y);
    }

    fn slot(&self, n: usize) -> Result<usize> {
        self.indices.binary_search(&n).map_err(|_| {
            outside(
                n,
                self.indices.first().copied().unwrap_or(0),
                self.indices.last().copied().unwrap_or(0),
            )
        })
    }
}

impl IterateSource for CapturedIterates {
    fn x_at(&self, n: usize) -> Result<&[f64]> {
        let k = self.slot(n)?;
        Ok(&self.xs[k * self.d1..(k + 1) * self.d1])
    }

    fn y_at(&self, n: usize) -> Result<&[f64]> {
        let k = self.slot(n)?;
        Ok(&self.ys[k * self.d2..(k + 1) * self.d2])
    }
}

/// A piecewise-linear fluctuation path over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationPath {
    pub clock: Clock,
    pub anchor: usize,
    pub window: f64,
    pub knot_indices: Vec<usize>,
    pub knot_times: Vec<f64>,
    pub knot_values: Vec<Vector>,
}

impl FluctuationPath {
    /// Linear interpolation at offset `t`, held constant outside the knots.
    pub fn value_at(&self, t: f64) -> Vector {
        let times = &self.knot_times;
        let last = times.len() - 1;
        if t <= times[0] {
            return self.knot_values[0].clone();
        }
        if t >= times[last] {
            return self.knot_values[last].clone();
        }
        let j = times.partition_point(|&s| s <= t) - 1;
        let theta = (t - times[j]) / (times[j + 1] - times[j]);
        &self.knot_values[j] * (1.0 - theta) + &self.knot_values[j + 1] * theta
    }

    pub fn on_grid(&self, grid: &[f64]) -> Vec<Vector> {
        grid.iter().map(|&t| self.value_at(t)).collect()
    }

    pub fn dim(&self) -> usize {
        self.knot_values.first().map_or(0, |v| v.len())
    }
}

/// Comparison ODE values at a window's knots.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSolution {
    pub which: ComparisonKind,
    pub times: Vec<f64>,
    pub values: Vec<Vector>,
}

/// Integrates the comparison ODE `which` from `start` through the given
/// increasing offsets (the first must be 0), `substeps` RK4 steps per
/// interval. `eps` is the frozen `ε_n` used by [`ComparisonKind::SlowOnFastClock`];
/// `frozen_y` is the slow iterate held fixed by [`ComparisonKind::FastFrozen`].
pub fn comparison_at(
    which: ComparisonKind,
    fields: &AveragedFields<'_>,
    start: &[f64],
    frozen_y: &[f64],
    eps: f64,
    offsets: &[f64],
    substeps: usize,
) -> Result<Vec<Vector>> {
    let finite = |z: &Vector| z.iter().all(|v| v.is_finite());
    let z0 = Vector::from_column_slice(start);
    match which {
        ComparisonKind::FastFrozen => {
            let f = |_: f64, x: &Vector| fields.hbar(x.as_slice(), frozen_y);
            rk4_through(&f, z0, offsets, substeps, finite)
        }
        ComparisonKind::SlowAveraged => {
            let f = |_: f64, y: &Vector| fields.fbar(y.as_slice());
            rk4_through(&f, z0, offsets, substeps, finite)
        }
        ComparisonKind::SlowOnFastClock => {
            let f = |_: f64, y: &Vector| Ok(fields.fbar(y.as_slice())? * eps);
            rk4_through(&f, z0, offsets, substeps, finite)
        }
    }
}

/// Solves the comparison ODE from the iterates at `anchor` over every knot
/// of the window on the matching clock.
#[allow(clippy::too_many_arguments)]
pub fn solve_comparison(
    which: ComparisonKind,
    spec: &ProblemSpec,
    pair: &SchedulePair,
    anchor: usize,
    x_n: &[f64],
    y_n: &[f64],
    window: f64,
    substeps: usize,
) -> Result<ComparisonSolution> {
    if !(window > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "window must be positive, got {window}"
        )));
    }
    let table = table_for(pair, which.clock(), anchor, window)?;
    let plan = WindowPlan::full(&table, which.clock(), anchor, window)?;
    let fields = AveragedFields::new(spec);
    let eps = pair.slow.step_value(anchor)? / pair.fast.step_value(anchor)?;
    let start = if which == ComparisonKind::FastFrozen {
        x_n
    } else {
        y_n
    };
    let values = comparison_at(which, &fields, start, y_n, eps, &plan.offsets, substeps)?;
    Ok(ComparisonSolution {
        which,
        times: plan.offsets,
        values,
    })
}

/// Tabulates `pair` far enough to contain the window at `anchor`.
pub fn table_for(
    pair: &SchedulePair,
    clock: Clock,
    anchor: usize,
    window: f64,
) -> Result<PairTable> {
    let mut horizon = (anchor + 1).max(1024) * 2;
    loop {
        let table = pair.tabulate(horizon)?;
        let ct = clock_of(&table, clock);
        match ct.window_end(anchor, window) {
            Ok(_) => return Ok(table),
            Err(Error::HorizonExceeded { .. }) => {
                if let Some(len) = pair.fast.len().or(pair.slow.len()) {
                    if horizon >= len {
                        return Err(Error::HorizonExceeded {
                            target: ct.time(anchor.min(ct.len() - 1)) + window,
                            len,
                        });
                    }
                    horizon = (horizon * 4).min(len);
                } else {
                    horizon *= 4;
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Last index the windows at `anchors` touch on `clock`.
pub fn required_horizon(
    pair: &SchedulePair,
    clock: Clock,
    anchors: &[usize],
    window: f64,
) -> Result<usize> {
    let last = *anchors
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidProblem("no anchors".into()))?;
    let table = table_for(pair, clock, last, window)?;
    let ct = clock_of(&table, clock);
    let mut end = 0;
    for &n in anchors {
        end = end.max(ct.window_end(n, window)?);
    }
    Ok(end)
}

/// Fast fluctuation values at the plan's knots.
pub fn fast_path_from<S: IterateSource>(
    source: &S,
    fields: &AveragedFields<'_>,
    table: &PairTable,
    plan: &WindowPlan,
) -> Result<FluctuationPath> {
    let mut values = Vec::with_capacity(plan.knots.len());
    for &j in &plan.knots {
        let lam = fields.lambda(source.y_at(j)?)?;
        let x = Vector::from_column_slice(source.x_at(j)?);
        values.push((lam - x) / table.fast[j].sqrt());
    }
    Ok(FluctuationPath {
        clock: plan.clock,
        anchor: plan.anchor,
        window: plan.window,
        knot_indices: plan.knots.clone(),
        knot_times: plan.offsets.clone(),
        knot_values: values,
    })
}

/// Slow fluctuation values at the plan's knots; the plan's clock must
/// match `variant`.
pub fn slow_path_from<S: IterateSource>(
    source: &S,
    fields: &AveragedFields<'_>,
    table: &PairTable,
    plan: &WindowPlan,
    variant: SlowVariant,
    substeps: usize,
) -> Result<FluctuationPath> {
    let which = variant.comparison();
    if which.clock() != plan.clock {
        return Err(Error::InvalidProblem(format!(
            "{variant:?} slow fluctuation needs a {} clock window",
            which.clock().label()
        )));
    }
    let n = plan.anchor;
    let y_n = source.y_at(n)?;
    let eps = table.slow[n] / table.fast[n];
    let comp = comparison_at(which, fields, y_n, y_n, eps, &plan.offsets, substeps)?;
    let mut values = Vec::with_capacity(plan.knots.len());
    for (k, &j) in plan.knots.iter().enumerate() {
        let y = Vector::from_column_slice(source.y_at(j)?);
        values.push((y - &comp[k]) / table.fast[j].sqrt());
    }
    Ok(FluctuationPath {
        clock: plan.clock,
        anchor: n,
        window: plan.window,
        knot_indices: plan.knots.clone(),
        knot_times: plan.offsets.clone(),
        knot_values: values,
    })
}

fn trajectory_table(traj: &Trajectory, pair: &SchedulePair) -> Result<PairTable> {
    pair.tabulate(traj.n_end + 1)
}

/// `u^n(·)` over the full window of `traj` at anchor `n`.
pub fn fast_fluctuation(
    traj: &Trajectory,
    spec: &ProblemSpec,
    pair: &SchedulePair,
    n: usize,
    window: f64,
) -> Result<FluctuationPath> {
    let table = trajectory_table(traj, pair)?;
    let plan = WindowPlan::full(&table, Clock::Fast, n, window)?;
    fast_path_from(traj, &AveragedFields::new(spec), &table, &plan)
}

/// `w^n(·)` over the full window of `traj` at anchor `n`.
pub fn slow_fluctuation(
    traj: &Trajectory,
    spec: &ProblemSpec,
    pair: &SchedulePair,
    n: usize,
    window: f64,
    variant: SlowVariant,
    substeps: usize,
) -> Result<FluctuationPath> {
    let table = trajectory_table(traj, pair)?;
    let clock = variant.comparison().clock();
    let plan = WindowPlan::full(&table, clock, n, window)?;
    slow_path_from(
        traj,
        &AveragedFields::new(spec),
        &table,
        &plan,
        variant,
        substeps,
    )
}

/// `η_n = (λ(y*) − x_n)/√a(n)` and `υ_n = (y_n − y*)/√a(n)` at `indices`.
pub fn clt_quantities<S: IterateSource>(
    source: &S,
    spec: &ProblemSpec,
    pair: &SchedulePair,
    y_star: &[f64],
    indices: &[usize],
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let fields = AveragedFields::new(spec);
    let lam = fields.lambda(y_star)?;
    let ys = Vector::from_column_slice(y_star);
    let mut eta = Vec::with_capacity(indices.len());
    let mut upsilon = Vec::with_capacity(indices.len());
    for &n in indices {
        let s = pair.fast.step_value(n)?.sqrt();
        eta.push((&lam - Vector::from_column_slice(source.x_at(n)?)) / s);
        upsilon.push((Vector::from_column_slice(source.y_at(n)?) - &ys) / s);
    }
    Ok((eta, upsilon))
}

/// Writes `anchor_n,clock,t_offset,component,value` rows for every knot of
/// every path; components are named by the path's label and index
/// (`u0`, `w1`, ...).
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[(&str, &FluctuationPath)]) -> Result<()> {
    writeln!(out, "anchor_n,clock,t_offset,component,value")?;
    for (label, p) in paths {
        for (t, v) in p.knot_times.iter().zip(&p.knot_values) {
            for (k, c) in v.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{}{},{}",
                    p.anchor,
                    p.clock.label(),
                    t,
                    label,
                    k,
                    c
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate, InitialCondition};
    use crate::model::builtin;

    fn scalar_slow(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ProblemSpec {
        ProblemSpec::new(
            "slow",
            1,
            1,
            |x, y, _, o| o[0] = y[0] - x[0],
            move |_, y, _, o| o[0] = f(y[0]),
        )
        .with_lambda(|y| Vector::from_element(1, y[0]))
    }

    fn end_value(spec: &ProblemSpec, offsets: &[f64], substeps: usize) -> f64 {
        let fields = AveragedFields::new(spec);
        let v = comparison_at(
            ComparisonKind::SlowAveraged,
            &fields,
            &[1.0],
            &[1.0],
            1.0,
            offsets,
            substeps,
        )
        .unwrap();
        v.last().unwrap()[0]
    }

    #[test]
    fn comparison_closed_forms() {
        // Ten knot intervals on [0, 1], sixteen RK4 steps each.
        let knots = uniform_grid(1.0, 11);
        let lin = scalar_slow(|y| -y);
        assert!((end_value(&lin, &knots, 16) - (-1.0f64).exp()).abs() < 1e-8);
        let cubic = scalar_slow(|y| -y * y * y);
        assert!((end_value(&cubic, &knots, 16) - 1.0 / 3f64.sqrt()).abs() < 1e-7);

        let still = ProblemSpec::new(
            "still",
            1,
            1,
            |_, _, _, o| o[0] = 0.0,
            |_, _, _, o| o[0] = 0.0,
        );
        let fields = AveragedFields::new(&still);
        let v = comparison_at(
            ComparisonKind::FastFrozen,
            &fields,
            &[0.3],
            &[1.0],
            1.0,
            &[0.0, 0.5, 1.0],
            16,
        )
        .unwrap();
        assert!(v.iter().all(|z| z[0] == 0.3));
    }

    #[test]
    fn comparison_step_halving() {
        let lin = scalar_slow(|y| -y);
        let exact = (-1.0f64).exp();
        let e1 = (end_value(&lin, &[0.0, 1.0], 2) - exact).abs();
        let e2 = (end_value(&lin, &[0.0, 1.0], 4) - exact).abs();
        assert!(e1 / e2 > 14.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn fast_fluctuation_formula() {
        let spec = builtin::p1_with(0.0, 0.0);
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[0.5], &[0.7], 0);
        let traj = simulate(&spec, &pair, 0, 500, &init, 1, false).unwrap();
        let path = fast_fluctuation(&traj, &spec, &pair, 100, 1.0).unwrap();
        for (&j, v) in path.knot_indices.iter().zip(&path.knot_values) {
            let expected = (traj.y(j)[0] - traj.x(j)[0]) / pair.fast.step_value(j).unwrap().sqrt();
            assert_eq!(v[0], expected);
        }
        // Midpoint property between adjacent knots.
        let (t0, t1) = (path.knot_times[3], path.knot_times[4]);
        let mid = path.value_at(0.5 * (t0 + t1))[0];
        let avg = 0.5 * (path.knot_values[3][0] + path.knot_values[4][0]);
        assert!((mid - avg).abs() <= 1e-15 * avg.abs().max(1.0));
    }

    #[test]
    fn on_manifold_paths_vanish() {
        let spec = builtin::p1_with(0.0, 0.0);
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[0.0], &[0.0], 0);
        let traj = simulate(&spec, &pair, 0, 400, &init, 1, false).unwrap();
        let path = fast_fluctuation(&traj, &spec, &pair, 10, 1.0).unwrap();
        assert!(path.knot_values.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn noiseless_slow_path_is_small() {
        let spec = builtin::p1_with(0.0, 0.0);
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[1.0], &[1.0], 0);
        let table = table_for(&pair, Clock::Slow, 1000, 1.0).unwrap();
        let end = table.slow_clock.window_end(1000, 1.0).unwrap();
        let traj = simulate(&spec, &pair, 0, end + 1, &init, 1, false).unwrap();
        let w = slow_fluctuation(&traj, &spec, &pair, 1000, 1.0, SlowVariant::Slow, 16).unwrap();
        assert_eq!(w.knot_values[0][0], 0.0);
        assert!(w.knot_values.iter().all(|v| v[0].is_finite()));
    }

    #[test]
    fn clt_examples() {
        let spec = builtin::p1();
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[0.0], &[0.0], 0);
        let traj = simulate(&spec, &pair, 0, 50, &init, 1, false).unwrap();
        let (eta, ups) = clt_quantities(&traj, &spec, &pair, &[0.0], &[0]).unwrap();
        assert_eq!(eta[0][0], 0.0);
        assert_eq!(ups[0][0], 0.0);
        let s = pair.fast.step_value(20).unwrap().sqrt();
        let (_, ups) =
            clt_quantities(&traj, &spec, &pair, &[traj.y(20)[0] - 2.0 * s], &[20]).unwrap();
        assert!((ups[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_plan_matches_full_plan() {
        let spec = builtin::p2();
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[0.2], &[0.4], 0);
        let table = table_for(&pair, Clock::Fast, 200, 2.0).unwrap();
        let end = table.fast_clock.window_end(200, 2.0).unwrap();
        let traj = simulate(&spec, &pair, 0, end, &init, 3, false).unwrap();
        let full = fast_fluctuation(&traj, &spec, &pair, 200, 2.0).unwrap();
        let grid = uniform_grid(2.0, 64);
        let table = pair.tabulate(traj.n_end + 1).unwrap();
        let plan = WindowPlan::grid(&table, Clock::Fast, 200, 2.0, &grid).unwrap();
        let sparse = fast_path_from(&traj, &AveragedFields::new(&spec), &table, &plan).unwrap();
        for (a, b) in full.on_grid(&grid).iter().zip(sparse.on_grid(&grid)) {
            assert!((a[0] - b[0]).abs() <= 1e-12 * a[0].abs().max(1.0));
        }
    }
}
