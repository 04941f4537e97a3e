//! Step-size sequences, algorithmic clocks and the numerical step-size
//! assumption checks.
//!
//! A [`StepSchedule`] maps an iteration index `n` to a step `a(n)` in
//! `(0, 1)`. Summing the steps gives the algorithmic clock
//! `t(n) = a(0) + ... + a(n-1)`, on which the interpolated fluctuation
//! processes live. Clock tables are precomputed once and then shared
//! read-only by every window query.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A deterministic step-size sequence `n ↦ a(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `a(n) = scale / (n + 1)^exponent`.
    PowerLaw { scale: f64, exponent: f64 },
    /// Explicit finite table of steps.
    Tabulated { values: Vec<f64> },
}

impl StepSchedule {
    pub fn power_law(scale: f64, exponent: f64) -> Self {
        StepSchedule::PowerLaw { scale, exponent }
    }

    pub fn tabulated(values: Vec<f64>) -> Self {
        StepSchedule::Tabulated { values }
    }

    /// A tabulated schedule repeating `value` for `len` indices.
    pub fn constant(value: f64, len: usize) -> Self {
        StepSchedule::Tabulated {
            values: vec![value; len],
        }
    }

    /// Number of indices the schedule covers, `None` when unbounded.
    pub fn len(&self) -> Option<usize> {
        match self {
            StepSchedule::PowerLaw { .. } => None,
            StepSchedule::Tabulated { values } => Some(values.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Checks parameters without evaluating any step.
    pub fn check(&self) -> Result<()> {
        match self {
            StepSchedule::PowerLaw { scale, exponent } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::InvalidSchedule(format!(
                        "power-law scale must be positive, got {scale}"
                    )));
                }
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return Err(Error::InvalidSchedule(format!(
                        "power-law exponent must be positive, got {exponent}"
                    )));
                }
                Ok(())
            }
            StepSchedule::Tabulated { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidSchedule("empty tabulated schedule".into()));
                }
                Ok(())
            }
        }
    }

    /// Unchecked evaluation; callers guarantee the index is in range.
    #[inline]
    fn raw(&self, n: usize) -> f64 {
        match self {
            StepSchedule::PowerLaw { scale, exponent } => scale / ((n + 1) as f64).powf(*exponent),
            StepSchedule::Tabulated { values } => values[n],
        }
    }

    /// Step `a(n)`, guaranteed to lie in `(0, 1)`.
    pub fn step_value(&self, n: usize) -> Result<f64> {
        if let Some(len) = self.len() {
            if n >= len {
                return Err(Error::ScheduleIndex { index: n, len });
            }
        }
        let value = self.raw(n);
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::StepOutOfRange { index: n, value });
        }
        Ok(value)
    }

    /// Evaluates the first `len` steps into a table.
    pub fn table(&self, len: usize) -> Result<Vec<f64>> {
        self.check()?;
        (0..len).map(|n| self.step_value(n)).collect()
    }

    /// Estimates `lim (1/a(n+1) − 1/a(n))` from the first `horizon` indices.
    pub fn phi_limit(&self, horizon: usize) -> Result<PhiEstimate> {
        phi_limit(self, horizon)
    }
}

/// The fast/slow pair `(a, b)` of a two-timescale scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulePair {
    pub fast: StepSchedule,
    pub slow: StepSchedule,
    /// Index count over which [`validate_pair`] last ran, if it has.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validated_horizon: Option<usize>,
}

impl SchedulePair {
    pub fn new(fast: StepSchedule, slow: StepSchedule) -> Self {
        Self {
            fast,
            slow,
            validated_horizon: None,
        }
    }

    /// `a(n) = c_fast/(n+1)^ρ`, `b(n) = c_slow/(n+1)^(3ρ/2 + ε)`.
    pub fn power_law_family(c_fast: f64, c_slow: f64, rho: f64, eps: f64) -> Self {
        Self::new(
            StepSchedule::power_law(c_fast, rho),
            StepSchedule::power_law(c_slow, 1.5 * rho + eps),
        )
    }

    /// The reference pair used throughout the harness:
    /// `a(n) = 0.9/(n+1)^0.6`, `b(n) = 0.8/(n+1)^0.95`.
    pub fn reference() -> Self {
        Self::power_law_family(0.9, 0.8, 0.6, 0.05)
    }

    /// Tabulates both schedules and both clocks over `[0, horizon)`.
    pub fn tabulate(&self, horizon: usize) -> Result<PairTable> {
        let fast = self.fast.table(horizon)?;
        let slow = self.slow.table(horizon)?;
        let fast_clock = ClockTable::from_steps(&fast);
        let slow_clock = ClockTable::from_steps(&slow);
        Ok(PairTable {
            fast,
            slow,
            fast_clock,
            slow_clock,
        })
    }
}

/// Precomputed steps and clocks for a pair over a fixed horizon.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub fast: Vec<f64>,
    pub slow: Vec<f64>,
    pub fast_clock: ClockTable,
    pub slow_clock: ClockTable,
}

impl PairTable {
    pub fn horizon(&self) -> usize {
        self.fast.len()
    }
}

/// Which algorithmic clock a quantity lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    Fast,
    Slow,
}

impl Clock {
    pub fn label(self) -> &'static str {
        match self {
            Clock::Fast => "fast",
            Clock::Slow => "slow",
        }
    }
}

/// Cumulative step sums `t(n)`, one entry per index, `t(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockTable {
    times: Vec<f64>,
}

impl ClockTable {
    /// `t(n) = steps[0] + ... + steps[n-1]` for `n = 0..=steps.len()`.
    pub fn from_steps(steps: &[f64]) -> Self {
        let mut times = Vec::with_capacity(steps.len() + 1);
        let mut t = 0.0;
        times.push(t);
        for &s in steps {
            t += s;
            times.push(t);
        }
        Self { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        self.times[n]
    }

    /// Smallest `m ≥ n` with `t(m) ≥ t(n) + window`.
    pub fn window_end(&self, n: usize, window: f64) -> Result<usize> {
        if n >= self.times.len() {
            return Err(Error::HorizonExceeded {
                target: f64::NAN,
                len: self.times.len(),
            });
        }
        let target = self.times[n] + window;
        let m = n + self.times[n..].partition_point(|&t| t < target);
        if m >= self.times.len() {
            return Err(Error::HorizonExceeded {
                target,
                len: self.times.len(),
            });
        }
        Ok(m)
    }

    /// Largest `m ≤ n` with `t(m) ≤ t(n) − window`.
    pub fn lookback(&self, n: usize, window: f64) -> Result<usize> {
        let tn = self.times[n];
        if tn < window {
            return Err(Error::EmptyLookback {
                index: n,
                time: tn,
                window,
            });
        }
        let target = tn - window;
        // t(0) = 0 ≤ target, so the count below is at least 1.
        let count = self.times[..=n].partition_point(|&t| t <= target);
        Ok(count - 1)
    }

    /// Index `j` of the knot interval `[t(j), t(j+1))` containing
    /// `t(anchor) + offset`, clamped to `[anchor, last]`.
    pub fn knot_interval(&self, anchor: usize, offset: f64, last: usize) -> usize {
        let target = self.times[anchor] + offset;
        let count = self.times[anchor..=last].partition_point(|&t| t <= target);
        (anchor + count.saturating_sub(1)).min(last)
    }
}

/// Builds the clock of the first `len` steps of `sched` (`len` entries).
pub fn clock(sched: &StepSchedule, len: usize) -> Result<ClockTable> {
    if len == 0 {
        return Err(Error::InvalidSchedule(
            "clock needs at least one index".into(),
        ));
    }
    let steps = sched.table(len - 1)?;
    Ok(ClockTable::from_steps(&steps))
}

/// Tail-extrapolated estimate of `lim (1/a(n+1) − 1/a(n))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiEstimate {
    /// Extrapolated limit.
    pub value: f64,
    /// Plain tail average over the last tenth of the horizon.
    pub tail_average: f64,
    /// Tail averages at horizons `N/2` and `N` agree within 1e-3.
    pub converged: bool,
}

const PHI_AGREEMENT: f64 = 1e-3;

fn tail_average(inv: &[f64], horizon: usize) -> f64 {
    // Differences d(n) = inv[n+1] − inv[n] for n in the last tenth below `horizon`.
    let width = (horizon / 10).max(1);
    let start = horizon - width;
    (inv[horizon] - inv[start]) / width as f64
}

/// Estimates `φ = lim (1/a(n+1) − 1/a(n))` over `n < horizon`.
///
/// Tail averages are taken at horizons `N/4`, `N/2`, `N` and combined by
/// Aitken extrapolation, which is exact when the tail decays
/// geometrically along doubling horizons (any power-law decay).
pub fn phi_limit(sched: &StepSchedule, horizon: usize) -> Result<PhiEstimate> {
    if horizon < 100 {
        return Err(Error::InvalidSchedule(format!(
            "phi estimation needs a horizon of at least 100, got {horizon}"
        )));
    }
    sched.check()?;
    // Tabulated schedules need a(N); shrink the horizon by one if short.
    let horizon = match sched.len() {
        Some(len) if len <= horizon => len - 1,
        _ => horizon,
    };
    let inv: Vec<f64> = (0..=horizon)
        .map(|n| sched.step_value(n).map(|a| 1.0 / a))
        .collect::<Result<_>>()?;
    let a1 = tail_average(&inv, horizon / 4);
    let a2 = tail_average(&inv, horizon / 2);
    let a3 = tail_average(&inv, horizon);
    let d1 = a2 - a1;
    let d2 = a3 - a2;
    let denom = d2 - d1;
    let scale = a3.abs().max(1.0);
    let value = if d1 * d2 > 0.0 && d2.abs() < d1.abs() && denom.abs() > 1e-14 * scale {
        a3 - d2 * d2 / denom
    } else {
        a3
    };
    Ok(PhiEstimate {
        value,
        tail_average: a3,
        converged: (a3 - a2).abs() <= PHI_AGREEMENT,
    })
}

/// Which limit theorem applies, decided by the estimated `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `φ = 0`: slow fluctuations on the slow clock, coupled limit ODE.
    SlowClock,
    /// `φ ≠ 0`: slow fluctuations rewritten on the fast clock,
    /// `w*(t) = ∫ (φ/2) w*`, fast drift shifted by `φ/2`.
    FastClock { phi: f64 },
}

impl Regime {
    pub fn detect(phi: f64, tol: f64) -> Self {
        if phi.abs() <= tol {
            Regime::SlowClock
        } else {
            Regime::FastClock { phi }
        }
    }
}

/// Step-size diagnostics collected by [`validate_pair`].
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleDiagnostics {
    pub phi_estimate: f64,
    pub phi_tail_average: f64,
    pub phi_converged: bool,
    pub vartheta_estimate: f64,
    pub vartheta_converged: bool,
    /// `(n, b(n)/a(n)^{3/2})` at log-spaced indices.
    pub ratio_trend: Vec<(usize, f64)>,
    pub ratio_first_decile: f64,
    pub ratio_last_decile: f64,
    /// `(T, sup_n a(m⁻(n,T)) / (a(n) e^T))`.
    pub zeta_profile: Vec<(f64, f64)>,
    /// `(n, (a(n)/b(n))(1/a(n+1) − 1/a(n)))` at log-spaced indices.
    pub bn_omega_trend: Vec<(usize, f64)>,
    pub bn_omega_first_decile: f64,
    pub bn_omega_last_decile: f64,
}

/// Pass/fail flag per step-size assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssumptionFlags {
    /// `0 < b(n) ≤ a(n)^{3/2} < a(n) < 1` for every checked index.
    pub a1_ordering: bool,
    /// `b/a^{3/2}` trends down (last decile mean below first).
    pub a1_ratio_trend: bool,
    /// `|φ̂| ≤ tol`.
    pub a2_phi_zero: bool,
    /// `(a/b)(1/a(n+1) − 1/a(n))` trends down.
    pub a3_trend: bool,
    /// `a(n)` strictly decreasing.
    pub a4_monotone: bool,
    /// Zeta profile decreasing along the T grid.
    pub a5_zeta: bool,
}

impl AssumptionFlags {
    pub fn all(&self) -> bool {
        self.a1_ordering
            && self.a1_ratio_trend
            && self.a2_phi_zero
            && self.a3_trend
            && self.a4_monotone
            && self.a5_zeta
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleValidation {
    pub horizon: usize,
    pub tol: f64,
    pub flags: AssumptionFlags,
    pub diagnostics: ScheduleDiagnostics,
    pub regime: Regime,
}

pub const DEFAULT_ZETA_GRID: [f64; 3] = [2.0, 4.0, 8.0];

fn decile_means(values: &[f64]) -> (f64, f64) {
    let width = (values.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (
        mean(&values[..width]),
        mean(&values[values.len() - width..]),
    )
}

fn log_spaced(values: &[f64], points: usize) -> Vec<(usize, f64)> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..points)
        .map(|k| {
            let frac = k as f64 / (points - 1) as f64;
            ((n as f64).powf(frac) - 1.0).round() as usize
        })
        .map(|i| i.min(n - 1))
        .collect();
    idx.dedup();
    idx.into_iter().map(|i| (i, values[i])).collect()
}

/// Runs every step-size check over `n < horizon`.
///
/// Violations are reported through the returned flags, never as errors;
/// an error means the schedules themselves could not be evaluated.
pub fn validate_pair(pair: &SchedulePair, horizon: usize, tol: f64) -> Result<ScheduleValidation> {
    if horizon < 100 {
        return Err(Error::InvalidSchedule(format!(
            "validation needs a horizon of at least 100, got {horizon}"
        )));
    }
    let a = pair.fast.table(horizon)?;
    let b = pair.slow.table(horizon)?;

    let a1_ordering = a
        .iter()
        .zip(&b)
        .all(|(&an, &bn)| 0.0 < bn && bn <= an.powf(1.5) && an.powf(1.5) < an && an < 1.0);
    let a4_monotone = a.windows(2).all(|w| w[1] < w[0]);

    let ratio: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(&an, &bn)| bn / an.powf(1.5))
        .collect();
    let (ratio_first, ratio_last) = decile_means(&ratio);

    let omega: Vec<f64> = (0..horizon - 1)
        .map(|n| (a[n] / b[n]) * (1.0 / a[n + 1] - 1.0 / a[n]))
        .collect();
    let (omega_first, omega_last) = decile_means(&omega);

    let phi = phi_limit(&pair.fast, horizon)?;
    let vartheta = phi_limit(&pair.slow, horizon)?;

    let fast_clock = ClockTable::from_steps(&a);
    let grid: Vec<f64> = DEFAULT_ZETA_GRID
        .iter()
        .copied()
        .filter(|&t| t < fast_clock.time(horizon) / 2.0)
        .collect();
    let zeta_profile = zeta_profile_from(&fast_clock, &a, &grid);
    let a5_zeta = !zeta_profile.is_empty() && is_decreasing(&zeta_profile);

    let flags = AssumptionFlags {
        a1_ordering,
        a1_ratio_trend: ratio_last < ratio_first,
        a2_phi_zero: phi.value.abs() <= tol,
        a3_trend: omega_last < omega_first,
        a4_monotone,
        a5_zeta,
    };
    let diagnostics = ScheduleDiagnostics {
        phi_estimate: phi.value,
        phi_tail_average: phi.tail_average,
        phi_converged: phi.converged,
        vartheta_estimate: vartheta.value,
        vartheta_converged: vartheta.converged,
        ratio_trend: log_spaced(&ratio, 32),
        ratio_first_decile: ratio_first,
        ratio_last_decile: ratio_last,
        zeta_profile,
        bn_omega_trend: log_spaced(&omega, 32),
        bn_omega_first_decile: omega_first,
        bn_omega_last_decile: omega_last,
    };
    Ok(ScheduleValidation {
        horizon,
        tol,
        flags,
        diagnostics,
        regime: Regime::detect(phi.value, tol),
    })
}

fn is_decreasing(profile: &[(f64, f64)]) -> bool {
    profile.windows(2).all(|w| w[1].1 < w[0].1)
}

/// `a(m⁻(n,T)) / (a(n) e^T)` for a single index.
pub fn zeta_ratio(clock: &ClockTable, steps: &[f64], n: usize, window: f64) -> Result<f64> {
    let m = clock.lookback(n, window)?;
    Ok(steps[m] / (steps[n] * window.exp()))
}

fn zeta_profile_from(clock: &ClockTable, steps: &[f64], grid: &[f64]) -> Vec<(f64, f64)> {
    grid.iter()
        .map(|&window| {
            let mut sup = f64::NEG_INFINITY;
            let mut m = 0usize;
            for n in 0..steps.len() {
                let target = clock.time(n) - window;
                if target < 0.0 {
                    continue;
                }
                // The lookback index is monotone in n.
                while m + 1 <= n && clock.time(m + 1) <= target {
                    m += 1;
                }
                sup = sup.max(steps[m] / steps[n]);
            }
            (window, sup / window.exp())
        })
        .collect()
}

/// Zeta profile of the fast schedule over `n < horizon`, plus whether it
/// decreases along the grid.
pub fn zeta_diagnostic(
    pair: &SchedulePair,
    grid: &[f64],
    horizon: usize,
) -> Result<(Vec<(f64, f64)>, bool)> {
    let a = pair.fast.table(horizon)?;
    let clock = ClockTable::from_steps(&a);
    let end = clock.time(horizon);
    if let Some(&bad) = grid.iter().find(|&&t| t >= end / 2.0) {
        return Err(Error::InvalidSchedule(format!(
            "window {bad} is not below half the clock horizon {}",
            end / 2.0
        )));
    }
    let profile = zeta_profile_from(&clock, &a, grid);
    let decreasing = is_decreasing(&profile);
    Ok((profile, decreasing))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_values() {
        let s = StepSchedule::power_law(0.9, 0.6);
        assert_eq!(s.step_value(0).unwrap(), 0.9);
        // 0.9 / 2^0.6, evaluated independently in extended precision.
        assert!((s.step_value(1).unwrap() - 0.593_778_559_847_802_4).abs() < 1e-15);
        let t = StepSchedule::tabulated(vec![0.5, 0.25]);
        assert_eq!(t.step_value(1).unwrap(), 0.25);
    }

    #[test]
    fn step_value_errors() {
        let t = StepSchedule::tabulated(vec![0.5, 0.25]);
        assert!(matches!(t.step_value(2), Err(Error::ScheduleIndex { .. })));
        let big = StepSchedule::power_law(1.5, 0.6);
        assert!(matches!(
            big.step_value(0),
            Err(Error::StepOutOfRange { .. })
        ));
        assert!(StepSchedule::power_law(0.5, -1.0).check().is_err());
    }

    #[test]
    fn clock_values() {
        let c = clock(&StepSchedule::constant(0.5, 10), 5).unwrap();
        assert_eq!(c.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        let p = clock(&StepSchedule::power_law(0.9, 0.6), 3).unwrap();
        assert_eq!(p.time(0), 0.0);
        assert!((p.time(2) - 1.493_778_559_847_802_4).abs() < 1e-15);
    }

    #[test]
    fn window_and_lookback() {
        let c = clock(&StepSchedule::constant(0.5, 40), 40).unwrap();
        assert_eq!(c.window_end(0, 2.0).unwrap(), 4);
        assert_eq!(c.window_end(0, 1.9).unwrap(), 4);
        assert_eq!(c.lookback(10, 2.0).unwrap(), 6);
        assert_eq!(c.lookback(10, 2.1).unwrap(), 5);
        assert!(matches!(
            c.lookback(2, 2.0),
            Err(Error::EmptyLookback { .. })
        ));
        assert!(matches!(
            c.window_end(35, 5.0),
            Err(Error::HorizonExceeded { .. })
        ));

        let p = clock(&StepSchedule::power_law(0.9, 0.6), 100).unwrap();
        assert_eq!(p.window_end(0, 1.4).unwrap(), 2);
    }

    #[test]
    fn phi_examples() {
        let exact = phi_limit(&StepSchedule::power_law(0.5, 1.0), 1000).unwrap();
        assert!((exact.value - 2.0).abs() < 1e-9);
        assert!(exact.converged);
        let flat = phi_limit(&StepSchedule::constant(0.5, 1000), 1000).unwrap();
        assert_eq!(flat.value, 0.0);
        let slow = phi_limit(&StepSchedule::power_law(0.9, 0.6), 1_000_000).unwrap();
        assert!(slow.value.abs() < 1e-3, "{slow:?}");
        assert!(slow.converged);
    }

    #[test]
    fn validate_reference_pair() {
        let v = validate_pair(&SchedulePair::reference(), 10_000, 1e-3).unwrap();
        assert!(v.flags.all(), "{:?}", v.flags);
        assert_eq!(v.regime, Regime::SlowClock);
    }

    #[test]
    fn validate_failures() {
        let same = SchedulePair::new(
            StepSchedule::power_law(0.5, 0.6),
            StepSchedule::power_law(0.5, 0.6),
        );
        let v = validate_pair(&same, 10_000, 1e-3).unwrap();
        assert!(!v.flags.a1_ordering);

        let flat = SchedulePair::new(
            StepSchedule::constant(0.5, 1000),
            StepSchedule::constant(0.1, 1000),
        );
        let v = validate_pair(&flat, 1000, 1e-3).unwrap();
        assert!(!v.flags.a4_monotone);
    }

    #[test]
    fn zeta_examples() {
        let pair = SchedulePair::reference();
        let (profile, decreasing) = zeta_diagnostic(&pair, &[2.0, 4.0, 8.0], 100_000).unwrap();
        assert!(decreasing, "{profile:?}");

        let flat = SchedulePair::new(
            StepSchedule::constant(0.5, 200),
            StepSchedule::constant(0.1, 200),
        );
        let (profile, _) = zeta_diagnostic(&flat, &[3.0], 200).unwrap();
        assert!((profile[0].1 - (-3.0f64).exp()).abs() < 1e-15);

        let a = pair.fast.table(20_001).unwrap();
        let c = ClockTable::from_steps(&a);
        let z = zeta_ratio(&c, &a, 10_000, 2.0).unwrap();
        assert!(z > (-2.0f64).exp() && z < 1.0, "{z}");
    }
}
