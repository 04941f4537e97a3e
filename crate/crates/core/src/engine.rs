//! Trajectory generation for the coupled recursion
//!
//! ```text
//! x_{n+1} = x_n + a(n) (h(x_n, y_n, Y_n) + M^f_{n+1})
//! y_{n+1} = y_n + b(n) (g(x_n, y_n, Y_n) + M^s_{n+1})
//! Y_{n+1} ~ p_{x_n, y_n}(· | Y_n)
//! ```
//!
//! Every trajectory owns one ChaCha8 stream selected from the base seed by
//! its ensemble index, and each step consumes randomness in the fixed
//! order `M^f`, `M^s`, Markov draw (single-state problems skip the last).
//! Output is therefore a pure function of
//! `(problem, schedules, range, initial condition, seed, index)` no matter
//! how trajectories are spread over threads.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{sqrt_psd, Matrix, Vector};
use crate::markov::sample_next;
use crate::model::{AveragedFields, ProblemSpec};
use crate::schedules::{PairTable, SchedulePair};
use crate::stats;

/// Any coordinate beyond this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Random stream of ensemble member `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Zero-mean Gaussian vector with covariance `q`.
pub fn martingale_draw(q: &Matrix, rng: &mut ChaCha8Rng) -> Result<Vector> {
    let root = sqrt_psd(q)?;
    let z = Vector::from_fn(q.nrows(), |_, _| rng.sample(StandardNormal));
    Ok(root * z)
}

/// Starting point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub x: Vector,
    pub y: Vector,
    pub state: usize,
}

impl InitialCondition {
    pub fn new(x: &[f64], y: &[f64], state: usize) -> Self {
        Self {
            x: Vector::from_column_slice(x),
            y: Vector::from_column_slice(y),
            state,
        }
    }

    fn check(&self, spec: &ProblemSpec) -> Result<()> {
        if self.x.len() != spec.d1 || self.y.len() != spec.d2 {
            return Err(Error::LengthMismatch(format!(
                "initial condition has dimensions ({}, {}), problem expects ({}, {})",
                self.x.len(),
                self.y.len(),
                spec.d1,
                spec.d2
            )));
        }
        if self.state >= spec.states {
            return Err(Error::LengthMismatch(format!(
                "initial Markov state {} of {}",
                self.state, spec.states
            )));
        }
        Ok(())
    }
}

/// Full iterate state, including the generator.
#[derive(Debug, Clone)]
pub struct SAState {
    pub n: usize,
    pub x: Vector,
    pub y: Vector,
    pub state: usize,
    pub rng: ChaCha8Rng,
}

impl SAState {
    pub fn new(n: usize, init: &InitialCondition, seed: u64, index: u64) -> Self {
        Self {
            n,
            x: init.x.clone(),
            y: init.y.clone(),
            state: init.state,
            rng: stream_rng(seed, index),
        }
    }
}

/// Scratch buffers for one step.
struct Stepper<'a> {
    spec: &'a ProblemSpec,
    h: Vec<f64>,
    g: Vec<f64>,
    zf: Vec<f64>,
    zs: Vec<f64>,
    mf: Vec<f64>,
    ms: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a ProblemSpec) -> Self {
        Self {
            spec,
            h: vec![0.0; spec.d1],
            g: vec![0.0; spec.d2],
            zf: vec![0.0; spec.d1],
            zs: vec![0.0; spec.d2],
            mf: vec![0.0; spec.d1],
            ms: vec![0.0; spec.d2],
        }
    }

    /// Advances `(x, y, state)` from index `n` to `n + 1` in place.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        n: usize,
        a: f64,
        b: f64,
        x: &mut [f64],
        y: &mut [f64],
        state: &mut usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let spec = self.spec;
        spec.h_into(x, y, *state, &mut self.h);
        spec.g_into(x, y, *state, &mut self.g);
        for z in self.zf.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for z in self.zs.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        // Single-state problems skip the Markov draw.
        let u: f64 = if spec.states == 1 { 0.0 } else { rng.random() };
        let gf = spec.qf.root_at(x, y)?;
        let gs = spec.qs.root_at(x, y)?;
        mat_vec(&gf, &self.zf, &mut self.mf);
        mat_vec(&gs, &self.zs, &mut self.ms);
        let next = if spec.states == 1 {
            0
        } else {
            sample_next(&spec.kernel_at(x, y), *state, u)
        };
        for k in 0..x.len() {
            x[k] += a * (self.h[k] + self.mf[k]);
        }
        for k in 0..y.len() {
            y[k] += b * (self.g[k] + self.ms[k]);
        }
        *state = next;
        check_finite(n + 1, x, y)
    }
}

#[inline]
fn mat_vec(m: &Matrix, z: &[f64], out: &mut [f64]) {
    let d = z.len();
    if d == 1 {
        out[0] = m[(0, 0)] * z[0];
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, zj) in z.iter().enumerate() {
            acc += m[(i, j)] * zj;
        }
        *o = acc;
    }
}

#[inline]
fn check_finite(index: usize, x: &[f64], y: &[f64]) -> Result<()> {
    for (label, v) in [("x", x), ("y", y)] {
        for (k, c) in v.iter().enumerate() {
            if !(c.abs() <= DIVERGENCE_LIMIT) {
                return Err(Error::Divergence {
                    index,
                    component: format!("{label}[{k}]"),
                    limit: DIVERGENCE_LIMIT,
                });
            }
        }
    }
    Ok(())
}

/// Advances one iteration using the schedule values at `state.n`.
pub fn step(mut state: SAState, spec: &ProblemSpec, pair: &SchedulePair) -> Result<SAState> {
    let a = pair.fast.step_value(state.n)?;
    let b = pair.slow.step_value(state.n)?;
    let mut stepper = Stepper::new(spec);
    stepper.step(
        state.n,
        a,
        b,
        state.x.as_mut_slice(),
        state.y.as_mut_slice(),
        &mut state.state,
        &mut state.rng,
    )?;
    state.n += 1;
    Ok(state)
}

/// Receives every iterate of a run; used to extract statistics from long
/// runs without storing them.
pub trait Observer {
    fn observe(&mut self, n: usize, x: &[f64], y: &[f64], state: usize);

    /// Noise `(M^f_{n+1}, M^s_{n+1})` drawn at step `n`.
    fn noise(&mut self, _n: usize, _mf: &[f64], _ms: &[f64]) {}

    /// Whether [`Observer::noise`] should be called.
    fn wants_noise(&self) -> bool {
        false
    }

    /// First index the run can stop after; `None` runs to the end.
    fn done_after(&self) -> Option<usize> {
        None
    }
}

/// Runs the recursion over `[n_start, n_end)` feeding `observer`.
///
/// `observer.observe` sees indices `n_start..=n_end`.
#[allow(clippy::too_many_arguments)]
pub fn run_with<O: Observer>(
    spec: &ProblemSpec,
    table: &PairTable,
    n_start: usize,
    n_end: usize,
    init: &InitialCondition,
    seed: u64,
    index: u64,
    observer: &mut O,
) -> Result<()> {
    init.check(spec)?;
    if n_end <= n_start {
        return Err(Error::LengthMismatch(format!(
            "empty range [{n_start}, {n_end})"
        )));
    }
    if table.horizon() < n_end {
        return Err(Error::HorizonExceeded {
            target: n_end as f64,
            len: table.horizon(),
        });
    }
    let mut rng = stream_rng(seed, index);
    let mut x = init.x.as_slice().to_vec();
    let mut y = init.y.as_slice().to_vec();
    let mut state = init.state;
    let mut stepper = Stepper::new(spec);
    let wants_noise = observer.wants_noise();
    observer.observe(n_start, &x, &y, state);
    for n in n_start..n_end {
        stepper.step(
            n,
            table.fast[n],
            table.slow[n],
            &mut x,
            &mut y,
            &mut state,
            &mut rng,
        )?;
        if wants_noise {
            observer.noise(n, &stepper.mf, &stepper.ms);
        }
        observer.observe(n + 1, &x, &y, state);
        if observer.done_after().is_some_and(|last| n + 1 >= last) {
            break;
        }
    }
    Ok(())
}

/// Stored iterates over `[n_start, n_end]` plus optional noise draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n_start: usize,
    pub n_end: usize,
    pub d1: usize,
    pub d2: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    states: Vec<usize>,
    mf: Option<Vec<f64>>,
    ms: Option<Vec<f64>>,
}

impl Trajectory {
    fn offset(&self, n: usize) -> usize {
        assert!(
            n >= self.n_start && n <= self.n_end,
            "index {n} outside [{}, {}]",
            self.n_start,
            self.n_end
        );
        n - self.n_start
    }

    pub fn contains(&self, n: usize) -> bool {
        n >= self.n_start && n <= self.n_end
    }

    pub fn x(&self, n: usize) -> &[f64] {
        let o = self.offset(n) * self.d1;
        &self.xs[o..o + self.d1]
    }

    pub fn y(&self, n: usize) -> &[f64] {
        let o = self.offset(n) * self.d2;
        &self.ys[o..o + self.d2]
    }

    pub fn state(&self, n: usize) -> usize {
        self.states[self.offset(n)]
    }

    /// `M^f_{n+1}`, when noise was recorded and `n < n_end`.
    pub fn mf(&self, n: usize) -> Option<&[f64]> {
        let o = self.offset(n) * self.d1;
        self.mf
            .as_ref()
            .and_then(|v| v.get(o..o + self.d1))
            .filter(|_| n < self.n_end)
    }

    /// `M^s_{n+1}`, when noise was recorded and `n < n_end`.
    pub fn ms(&self, n: usize) -> Option<&[f64]> {
        let o = self.offset(n) * self.d2;
        self.ms
            .as_ref()
            .and_then(|v| v.get(o..o + self.d2))
            .filter(|_| n < self.n_end)
    }

    pub fn has_noise(&self) -> bool {
        self.mf.is_some()
    }

    pub fn xs_vectors(&self) -> Vec<Vector> {
        (self.n_start..=self.n_end)
            .map(|n| Vector::from_column_slice(self.x(n)))
            .collect()
    }

    pub fn ys_vectors(&self) -> Vec<Vector> {
        (self.n_start..=self.n_end)
            .map(|n| Vector::from_column_slice(self.y(n)))
            .collect()
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Largest gap between stored iterates and the recursion replayed from
    /// the stored noise. Requires recorded noise.
    pub fn recursion_error(&self, spec: &ProblemSpec, pair: &SchedulePair) -> Result<f64> {
        if !self.has_noise() {
            return Err(Error::LengthMismatch(
                "trajectory has no recorded noise".into(),
            ));
        }
        let mut worst = 0.0f64;
        for n in self.n_start..self.n_end {
            let (a, b) = (pair.fast.step_value(n)?, pair.slow.step_value(n)?);
            let (x, y, i) = (self.x(n), self.y(n), self.state(n));
            let h = spec.eval_h(x, y, i);
            let g = spec.eval_g(x, y, i);
            let mf = self.mf(n).unwrap();
            let ms = self.ms(n).unwrap();
            for k in 0..self.d1 {
                worst = worst.max((x[k] + a * (h[k] + mf[k]) - self.x(n + 1)[k]).abs());
            }
            for k in 0..self.d2 {
                worst = worst.max((y[k] + b * (g[k] + ms[k]) - self.y(n + 1)[k]).abs());
            }
        }
        Ok(worst)
    }
}

struct Recorder {
    traj: Trajectory,
}

impl Observer for Recorder {
    fn observe(&mut self, _n: usize, x: &[f64], y: &[f64], state: usize) {
        self.traj.xs.extend_from_slice(x);
        self.traj.ys.extend_from_slice(y);
        self.traj.states.push(state);
    }

    fn noise(&mut self, _n: usize, mf: &[f64], ms: &[f64]) {
        if let Some(v) = self.traj.mf.as_mut() {
            v.extend_from_slice(mf);
        }
        if let Some(v) = self.traj.ms.as_mut() {
            v.extend_from_slice(ms);
        }
    }

    fn wants_noise(&self) -> bool {
        self.traj.mf.is_some()
    }
}

/// Run settings shared by every member of an ensemble.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n_start: usize,
    pub n_end: usize,
    pub init: InitialCondition,
    pub seed: u64,
    pub record_noise: bool,
}

/// Simulates ensemble member `index` and stores the whole path.
pub fn simulate_member(
    spec: &ProblemSpec,
    table: &PairTable,
    run: &RunConfig,
    index: u64,
) -> Result<Trajectory> {
    let len = run.n_end.saturating_sub(run.n_start) + 1;
    let mut rec = Recorder {
        traj: Trajectory {
            n_start: run.n_start,
            n_end: run.n_end,
            d1: spec.d1,
            d2: spec.d2,
            xs: Vec::with_capacity(len * spec.d1),
            ys: Vec::with_capacity(len * spec.d2),
            states: Vec::with_capacity(len),
            mf: run.record_noise.then(|| Vec::with_capacity(len * spec.d1)),
            ms: run.record_noise.then(|| Vec::with_capacity(len * spec.d2)),
        },
    };
    run_with(
        spec,
        table,
        run.n_start,
        run.n_end,
        &run.init,
        run.seed,
        index,
        &mut rec,
    )?;
    Ok(rec.traj)
}

/// Simulates one trajectory (stream 0 of `seed`) over `[n_start, n_end)`.
pub fn simulate(
    spec: &ProblemSpec,
    pair: &SchedulePair,
    n_start: usize,
    n_end: usize,
    init: &InitialCondition,
    seed: u64,
    record_noise: bool,
) -> Result<Trajectory> {
    let table = pair.tabulate(n_end)?;
    let run = RunConfig {
        n_start,
        n_end,
        init: init.clone(),
        seed,
        record_noise,
    };
    simulate_member(spec, &table, &run, 0)
}

/// Maps `f` over ensemble indices `0..count` in parallel, keeping index
/// order in the output.
pub fn par_ensemble<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

/// Simulates `count` independent trajectories with streams `0..count`.
pub fn simulate_ensemble(
    spec: &ProblemSpec,
    pair: &SchedulePair,
    run: &RunConfig,
    count: usize,
) -> Result<Vec<Trajectory>> {
    let table = pair.tabulate(run.n_end)?;
    par_ensemble(count, |k| simulate_member(spec, &table, run, k))
}

/// Fourth-moment estimates at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub n: usize,
    /// `E‖u_n‖⁴`, `u_n = (λ(y_n) − x_n)/√a(n)`.
    pub u4: f64,
    pub u4_se: f64,
    /// `E‖x_n‖⁴`.
    pub x4: f64,
    pub x4_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub checkpoints: Vec<MomentEstimate>,
    /// No checkpoint exceeds the running maximum of earlier checkpoints by
    /// more than two jackknife standard errors.
    pub u_bounded: bool,
    pub x_bounded: bool,
}

impl MomentReport {
    pub fn bounded(&self) -> bool {
        self.u_bounded && self.x_bounded
    }
}

fn bounded_flag(estimates: &[(f64, f64)]) -> bool {
    let mut running = f64::NEG_INFINITY;
    for (k, &(est, se)) in estimates.iter().enumerate() {
        if k > 0 && est > running + 2.0 * se {
            return false;
        }
        running = running.max(est);
    }
    true
}

/// Iterates `(x_n, y_n)` of each ensemble member at each checkpoint.
pub type CheckpointSamples = Vec<Vec<(Vector, Vector)>>;

/// Fourth moments of `u_n` and `x_n` from per-member checkpoint samples
/// (`samples[member][checkpoint]`).
pub fn moments_from_samples(
    spec: &ProblemSpec,
    pair: &SchedulePair,
    checkpoints: &[usize],
    samples: &CheckpointSamples,
) -> Result<MomentReport> {
    if samples.len() < 100 {
        return Err(Error::InsufficientEnsemble {
            got: samples.len(),
            min: 100,
        });
    }
    let fields = AveragedFields::new(spec);
    let mut estimates = Vec::with_capacity(checkpoints.len());
    for (c, &n) in checkpoints.iter().enumerate() {
        let a = pair.fast.step_value(n)?;
        let mut u4 = Vec::with_capacity(samples.len());
        let mut x4 = Vec::with_capacity(samples.len());
        for member in samples {
            let (x, y) = &member[c];
            let u = (fields.lambda(y.as_slice())? - x) / a.sqrt();
            u4.push(u.norm_squared().powi(2));
            x4.push(x.norm_squared().powi(2));
        }
        estimates.push(MomentEstimate {
            n,
            u4: stats::mean(&u4),
            u4_se: stats::jackknife_mean_se(&u4),
            x4: stats::mean(&x4),
            x4_se: stats::jackknife_mean_se(&x4),
        });
    }
    let u: Vec<_> = estimates.iter().map(|e| (e.u4, e.u4_se)).collect();
    let x: Vec<_> = estimates.iter().map(|e| (e.x4, e.x4_se)).collect();
    Ok(MomentReport {
        u_bounded: bounded_flag(&u),
        x_bounded: bounded_flag(&x),
        checkpoints: estimates,
    })
}

/// Fourth-moment diagnostics over stored trajectories.
pub fn moment_diagnostics(
    ensemble: &[Trajectory],
    spec: &ProblemSpec,
    pair: &SchedulePair,
    checkpoints: &[usize],
) -> Result<MomentReport> {
    let mut samples = Vec::with_capacity(ensemble.len());
    for traj in ensemble {
        let mut row = Vec::with_capacity(checkpoints.len());
        for &n in checkpoints {
            if !traj.contains(n) {
                return Err(Error::WindowOutOfRange {
                    start: n,
                    end: n,
                    first: traj.n_start,
                    last: traj.n_end + 1,
                });
            }
            row.push((
                Vector::from_column_slice(traj.x(n)),
                Vector::from_column_slice(traj.y(n)),
            ));
        }
        samples.push(row);
    }
    moments_from_samples(spec, pair, checkpoints, &samples)
}

struct CheckpointCollector<'a> {
    checkpoints: &'a [usize],
    next: usize,
    out: Vec<(Vector, Vector)>,
}

impl Observer for CheckpointCollector<'_> {
    fn observe(&mut self, n: usize, x: &[f64], y: &[f64], _state: usize) {
        while self.next < self.checkpoints.len() && self.checkpoints[self.next] == n {
            self.out
                .push((Vector::from_column_slice(x), Vector::from_column_slice(y)));
            self.next += 1;
        }
    }

    fn done_after(&self) -> Option<usize> {
        self.checkpoints.last().copied()
    }
}

/// Streams `count` trajectories from index 0 and records the iterates at
/// the (sorted) checkpoints only.
pub fn collect_checkpoints(
    spec: &ProblemSpec,
    pair: &SchedulePair,
    init: &InitialCondition,
    seed: u64,
    count: usize,
    checkpoints: &[usize],
) -> Result<CheckpointSamples> {
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints.is_empty() {
        return Err(Error::LengthMismatch(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    let last = *checkpoints.last().unwrap();
    let table = pair.tabulate(last.max(1))?;
    par_ensemble(count, |k| {
        let mut obs = CheckpointCollector {
            checkpoints,
            next: 0,
            out: Vec::with_capacity(checkpoints.len()),
        };
        run_with(spec, &table, 0, last.max(1), init, seed, k, &mut obs)?;
        Ok(obs.out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use crate::schedules::StepSchedule;

    fn noiseless_p1() -> ProblemSpec {
        builtin::p1_with(0.0, 0.0)
    }

    #[test]
    fn deterministic_steps() {
        let pair = SchedulePair::new(
            StepSchedule::tabulated(vec![0.5, 0.5]),
            StepSchedule::tabulated(vec![0.25, 0.25]),
        );
        let spec = noiseless_p1();
        let s = SAState::new(0, &InitialCondition::new(&[1.0], &[1.0], 0), 1, 0);
        let s = step(s, &spec, &pair).unwrap();
        assert_eq!((s.x[0], s.y[0], s.n), (1.0, 0.75, 1));
        let s = SAState::new(0, &InitialCondition::new(&[2.0], &[1.0], 0), 1, 0);
        let s = step(s, &spec, &pair).unwrap();
        assert_eq!(s.x[0], 1.5);

        let still = ProblemSpec::new(
            "still",
            1,
            1,
            |_, _, _, o| o[0] = 0.0,
            |_, _, _, o| o[0] = 0.0,
        )
        .with_noise(
            crate::model::NoiseCovariance::zero(1),
            crate::model::NoiseCovariance::zero(1),
        );
        let s = SAState::new(0, &InitialCondition::new(&[0.3], &[-0.2], 0), 1, 0);
        let s = step(s, &still, &pair).unwrap();
        assert_eq!((s.x[0], s.y[0]), (0.3, -0.2));
    }

    #[test]
    fn martingale_draws() {
        let mut rng = stream_rng(3, 0);
        assert_eq!(
            martingale_draw(&Matrix::zeros(2, 2), &mut rng)
                .unwrap()
                .amax(),
            0.0
        );
        let a = martingale_draw(&Matrix::identity(3, 3), &mut stream_rng(9, 4)).unwrap();
        let b = martingale_draw(&Matrix::identity(3, 3), &mut stream_rng(9, 4)).unwrap();
        assert_eq!(a, b);
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let mut rng = stream_rng(11, 0);
        let n = 100_000;
        let mut acc = Matrix::zeros(2, 2);
        for _ in 0..n {
            let m = martingale_draw(&q, &mut rng).unwrap();
            acc += &m * m.transpose();
        }
        acc /= n as f64;
        assert!((acc[(0, 0)] / 4.0 - 1.0).abs() < 0.05);
        assert!((acc[(1, 1)] / 9.0 - 1.0).abs() < 0.05);
        assert!(acc[(0, 1)].abs() < 0.05 * 6.0);
    }

    #[test]
    fn noiseless_contraction_and_determinism() {
        let spec = noiseless_p1();
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[1.0], &[1.0], 0);
        let t = simulate(&spec, &pair, 0, 10_000, &init, 5, false).unwrap();
        for n in 0..10_000 {
            assert!(t.y(n + 1)[0] < t.y(n)[0]);
        }
        assert!((t.x(10_000)[0] - t.y(10_000)[0]).abs() < 1e-3);
        let again = simulate(&spec, &pair, 0, 10_000, &init, 5, false).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn recursion_replays_exactly() {
        let spec = builtin::p2();
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[0.5], &[-0.5], 1);
        let t = simulate(&spec, &pair, 10, 2_000, &init, 17, true).unwrap();
        assert!(t.recursion_error(&spec, &pair).unwrap() <= 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let bad = ProblemSpec::new(
            "bad",
            1,
            1,
            |x, _, _, o| o[0] = 5.0 * x[0],
            |_, _, _, o| o[0] = 0.0,
        );
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[1.0], &[0.0], 0);
        let err = simulate(&bad, &pair, 0, 200_000, &init, 1, false).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn moment_bounds_flag() {
        assert!(bounded_flag(&[(1.0, 0.1), (0.9, 0.1), (1.1, 0.1)]));
        assert!(!bounded_flag(&[(1.0, 0.1), (1.5, 0.1)]));
    }

    #[test]
    fn noiseless_moments_vanish() {
        let spec = noiseless_p1();
        let pair = SchedulePair::reference();
        let init = InitialCondition::new(&[0.0], &[1.0], 0);
        let samples =
            collect_checkpoints(&spec, &pair, &init, 1, 100, &[100, 1000, 10_000]).unwrap();
        let r = moments_from_samples(&spec, &pair, &[100, 1000, 10_000], &samples).unwrap();
        let last = r.checkpoints.last().unwrap();
        assert!(last.u4 < r.checkpoints[0].u4);
        assert!(last.u4 < 1e-6, "{last:?}");
    }
}
