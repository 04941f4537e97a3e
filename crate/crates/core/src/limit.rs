//! The Gauss–Markov limit of the scaled fluctuations.
//!
//! The joint process `(u*, w*)` solves
//!
//! ```text
//! du = (A(t) + φ/2 I) u dt + G(t) dB,     G Gᵀ = Q_eff(t)
//! dw = (B(t) u + C(t) w) dt
//! ```
//!
//! with `A = ∇ₓh̄`, `B = ∇ₓḡ` at `(λ(y*(t)), y*(t))` and `C = ∇f̄(y*(t))`.
//! Its covariance follows the Lyapunov ODE `Σ̇ = FΣ + ΣFᵀ + D`,
//! `D = diag(Q_eff, 0)`.

use std::io::Write;
use std::sync::Arc;

use rand::RngExt;
use rand_distr::StandardNormal;

use crate::engine::{par_ensemble, stream_rng};
use crate::error::{Error, Result};
pub use crate::linalg::sqrt_psd;
use crate::linalg::{block_diag, symmetrize, Matrix, Vector};
use crate::markov::{effective_noise_covariance, Timescale};
use crate::model::{AveragedFields, ProblemSpec};
use crate::ode::{rk4_step, rk4_through};

/// Default number of integration steps over a window.
pub const DEFAULT_STEPS: usize = 4096;

/// Coefficient blocks at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    /// `∇ₓh̄`, without the `φ/2` shift.
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Effective fast covariance.
    pub q: Matrix,
}

type BlockFn = Arc<dyn Fn(f64) -> Result<Blocks> + Send + Sync>;

/// Drift and diffusion of the limit process.
#[derive(Clone)]
pub struct GaussMarkovSpec {
    pub d1: usize,
    pub d2: usize,
    pub phi: f64,
    blocks: BlockFn,
}

impl std::fmt::Debug for GaussMarkovSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaussMarkovSpec")
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("phi", &self.phi)
            .finish_non_exhaustive()
    }
}

/// Deterministic slow path `y*(·)` tabulated on a uniform grid and
/// evaluated by cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct SlowPath {
    pub step: f64,
    pub values: Vec<Vector>,
    pub slopes: Vec<Vector>,
}

impl SlowPath {
    /// Integrates `ẏ = scale · f̄(y)` from `y0` over `[0, horizon]`.
    pub fn solve(
        spec: &ProblemSpec,
        y0: &[f64],
        horizon: f64,
        intervals: usize,
        scale: f64,
    ) -> Result<Self> {
        let fields = AveragedFields::new(spec);
        let intervals = intervals.max(1);
        let step = horizon / intervals as f64;
        let times: Vec<f64> = (0..=intervals).map(|k| k as f64 * step).collect();
        let f = |_: f64, y: &Vector| Ok(fields.fbar(y.as_slice())? * scale);
        let values = rk4_through(&f, Vector::from_column_slice(y0), &times, 4, |z| {
            z.iter().all(|v| v.is_finite())
        })?;
        let slopes = values
            .iter()
            .map(|y| Ok(fields.fbar(y.as_slice())? * scale))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            step,
            values,
            slopes,
        })
    }

    pub fn constant(y: &[f64]) -> Self {
        let v = Vector::from_column_slice(y);
        Self {
            step: f64::INFINITY,
            slopes: vec![Vector::zeros(v.len())],
            values: vec![v],
        }
    }

    pub fn at(&self, t: f64) -> Vector {
        let last = self.values.len() - 1;
        if last == 0 || t <= 0.0 {
            return self.values[0].clone();
        }
        let s = t / self.step;
        if s >= last as f64 {
            return self.values[last].clone();
        }
        let k = s.floor() as usize;
        let th = s - k as f64;
        let (h00, h10) = (
            2.0 * th.powi(3) - 3.0 * th * th + 1.0,
            th.powi(3) - 2.0 * th * th + th,
        );
        let (h01, h11) = (-2.0 * th.powi(3) + 3.0 * th * th, th.powi(3) - th * th);
        &self.values[k] * h00
            + &self.slopes[k] * (h10 * self.step)
            + &self.values[k + 1] * h01
            + &self.slopes[k + 1] * (h11 * self.step)
    }
}

impl GaussMarkovSpec {
    pub fn from_blocks(
        d1: usize,
        d2: usize,
        phi: f64,
        f: impl Fn(f64) -> Result<Blocks> + Send + Sync + 'static,
    ) -> Self {
        Self {
            d1,
            d2,
            phi,
            blocks: Arc::new(f),
        }
    }

    /// Time-invariant coefficients.
    pub fn constant(a: Matrix, b: Matrix, c: Matrix, q: Matrix, phi: f64) -> Result<Self> {
        let (d1, d2) = (a.nrows(), c.nrows());
        if a.ncols() != d1 || q.shape() != (d1, d1) || b.shape() != (d2, d1) || c.ncols() != d2 {
            return Err(Error::LengthMismatch(
                "inconsistent limit coefficient blocks".into(),
            ));
        }
        let blocks = Blocks { a, b, c, q };
        Ok(Self::from_blocks(d1, d2, phi, move |_| Ok(blocks.clone())))
    }

    /// Coefficients linearised along `y*(·)`.
    pub fn along_path(spec: &ProblemSpec, path: SlowPath, phi: f64) -> Self {
        let spec = Arc::new(spec.clone());
        Self::from_blocks(spec.d1, spec.d2, phi, move |t| {
            let fields = AveragedFields::new(&spec);
            let y = path.at(t);
            let x = fields.lambda(y.as_slice())?;
            Ok(Blocks {
                a: fields.hbar_x(x.as_slice(), y.as_slice())?,
                b: fields.gbar_x(x.as_slice(), y.as_slice())?,
                c: fields.fbar_jacobian(y.as_slice())?,
                q: effective_noise_covariance(&spec, x.as_slice(), y.as_slice(), Timescale::Fast)?,
            })
        })
    }

    /// Joint law with `y*` solving `ẏ = f̄(y)` from `y0` over `[0, horizon]`.
    pub fn from_problem(spec: &ProblemSpec, y0: &[f64], horizon: f64, phi: f64) -> Result<Self> {
        let path = SlowPath::solve(spec, y0, horizon, 2 * DEFAULT_STEPS, 1.0)?;
        Ok(Self::along_path(spec, path, phi))
    }

    /// Law with `φ ≠ 0` schedules: `y*` frozen at `y_prime`, the slow block
    /// reduced to `ẇ = (φ/2) w`.
    pub fn fast_clock_law(spec: &ProblemSpec, y_prime: &[f64], phi: f64) -> Result<Self> {
        let fields = AveragedFields::new(spec);
        let x = fields.lambda(y_prime)?;
        let a = fields.hbar_x(x.as_slice(), y_prime)?;
        let q = effective_noise_covariance(spec, x.as_slice(), y_prime, Timescale::Fast)?;
        let d2 = spec.d2;
        let c = Matrix::identity(d2, d2) * (0.5 * phi);
        Self::constant(a, Matrix::zeros(d2, spec.d1), c, q, phi)
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn blocks(&self, t: f64) -> Result<Blocks> {
        (self.blocks)(t)
    }

    /// `A(t) + (φ/2) I`.
    pub fn fast_drift(&self, t: f64) -> Result<Matrix> {
        let b = self.blocks(t)?;
        Ok(b.a + Matrix::identity(self.d1, self.d1) * (0.5 * self.phi))
    }

    /// The joint drift `F(t)`.
    pub fn drift(&self, t: f64) -> Result<Matrix> {
        let bl = self.blocks(t)?;
        Ok(self.assemble(&bl))
    }

    fn assemble(&self, bl: &Blocks) -> Matrix {
        let (d1, d2) = (self.d1, self.d2);
        let mut f = Matrix::zeros(d1 + d2, d1 + d2);
        let shifted = &bl.a + Matrix::identity(d1, d1) * (0.5 * self.phi);
        f.view_mut((0, 0), (d1, d1)).copy_from(&shifted);
        f.view_mut((d1, 0), (d2, d1)).copy_from(&bl.b);
        f.view_mut((d1, d1), (d2, d2)).copy_from(&bl.c);
        f
    }

    /// The joint diffusion `D(t) = diag(Q_eff(t), 0)`.
    pub fn diffusion(&self, t: f64) -> Result<Matrix> {
        let bl = self.blocks(t)?;
        Ok(block_diag(&bl.q, &Matrix::zeros(self.d2, self.d2)))
    }
}

/// `Φ(t, s)` for `Φ̇ = M(t) Φ`, `Φ(s, s) = I`, by RK4 with step at most `dt`.
pub fn fundamental_matrix(
    field: &dyn Fn(f64) -> Result<Matrix>,
    s: f64,
    t: f64,
    dt: f64,
) -> Result<Matrix> {
    if t < s {
        return Err(Error::InvalidProblem(format!(
            "fundamental matrix needs t ≥ s, got t={t}, s={s}"
        )));
    }
    let d = field(s)?.nrows();
    if t == s {
        return Ok(Matrix::identity(d, d));
    }
    let steps = ((t - s) / dt).ceil().max(1.0) as usize;
    let h = (t - s) / steps as f64;
    let f = |tau: f64, p: &Matrix| Ok(field(tau)? * p);
    let mut phi = Matrix::identity(d, d);
    for k in 0..steps {
        phi = rk4_step(&f, s + k as f64 * h, &phi, h)?;
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fundamental matrix"));
    }
    Ok(phi)
}

/// `Σ(t)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceCurve {
    pub times: Vec<f64>,
    pub sigmas: Vec<Matrix>,
}

impl CovarianceCurve {
    pub fn last(&self) -> &Matrix {
        self.sigmas.last().expect("non-empty curve")
    }

    /// Linear interpolation in `t`.
    pub fn at(&self, t: f64) -> Matrix {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return self.sigmas[0].clone();
        }
        if t >= self.times[last] {
            return self.sigmas[last].clone();
        }
        let j = self.times.partition_point(|&s| s <= t) - 1;
        let th = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        &self.sigmas[j] * (1.0 - th) + &self.sigmas[j + 1] * th
    }

    /// Writes `t,row,col,value` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,row,col,value")?;
        for (t, s) in self.times.iter().zip(&self.sigmas) {
            for r in 0..s.nrows() {
                for c in 0..s.ncols() {
                    writeln!(out, "{},{},{},{}", t, r, c, s[(r, c)])?;
                }
            }
        }
        Ok(())
    }
}

/// Lyapunov curve from `Σ(0) = 0`.
pub fn lyapunov_covariance(
    spec: &GaussMarkovSpec,
    horizon: f64,
    dt: f64,
) -> Result<CovarianceCurve> {
    let d = spec.dim();
    lyapunov_covariance_from(spec, Matrix::zeros(d, d), horizon, dt)
}

/// Lyapunov curve from a given `Σ(0)`, symmetrised after every RK4 step.
pub fn lyapunov_covariance_from(
    spec: &GaussMarkovSpec,
    sigma0: Matrix,
    horizon: f64,
    dt: f64,
) -> Result<CovarianceCurve> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "horizon {horizon} and step {dt} must be positive"
        )));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / steps as f64;
    let f = |t: f64, s: &Matrix| {
        let bl = spec.blocks(t)?;
        let fm = spec.assemble(&bl);
        let dm = block_diag(&bl.q, &Matrix::zeros(spec.d2, spec.d2));
        Ok(&fm * s + s * fm.transpose() + dm)
    };
    let mut times = Vec::with_capacity(steps + 1);
    let mut sigmas = Vec::with_capacity(steps + 1);
    let mut s = sigma0;
    times.push(0.0);
    sigmas.push(s.clone());
    for k in 0..steps {
        s = rk4_step(&f, k as f64 * h, &s, h)?;
        symmetrize(&mut s);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Lyapunov covariance"));
        }
        times.push((k + 1) as f64 * h);
        sigmas.push(s.clone());
    }
    Ok(CovarianceCurve { times, sigmas })
}

/// Joint sample paths `(u*, w*)` of the limit process.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSample {
    pub times: Vec<f64>,
    /// `paths[p][k]` is path `p` at `times[k]`.
    pub paths: Vec<Vec<Vector>>,
}

impl LimitSample {
    pub fn at(&self, k: usize) -> Vec<Vector> {
        self.paths.iter().map(|p| p[k].clone()).collect()
    }
}

/// Coefficients tabulated at half steps, flattened row-major.
struct Tabulated {
    fast: Vec<Vec<f64>>,
    root: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn mv_add(m: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        *o += scale * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Euler–Maruyama for `u*`, RK4 for `w*` driven by `u*` interpolated
/// linearly over each step. Path `p` uses stream `p` of `seed`; values are
/// reported at `output_times` by linear interpolation between steps.
pub fn sample_limit_paths(
    spec: &GaussMarkovSpec,
    count: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
    output_times: &[f64],
) -> Result<LimitSample> {
    if dt > 1e-3 * horizon * (1.0 + 1e-12) {
        return Err(Error::InvalidProblem(format!(
            "sampler step {dt} exceeds 1e-3 of the horizon {horizon}"
        )));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / steps as f64;
    let (d1, d2) = (spec.d1, spec.d2);
    let mut tab = Tabulated {
        fast: Vec::with_capacity(2 * steps + 1),
        root: Vec::with_capacity(2 * steps + 1),
        b: Vec::with_capacity(2 * steps + 1),
        c: Vec::with_capacity(2 * steps + 1),
    };
    for k in 0..=2 * steps {
        let bl = spec.blocks(0.5 * k as f64 * h)?;
        let fast = &bl.a + Matrix::identity(d1, d1) * (0.5 * spec.phi);
        tab.fast.push(row_major(&fast));
        tab.root.push(row_major(&sqrt_psd(&bl.q)?));
        tab.b.push(row_major(&bl.b));
        tab.c.push(row_major(&bl.c));
    }
    let sqrt_h = h.sqrt();
    let paths = par_ensemble(count, |p| {
        let mut rng = stream_rng(seed, p);
        let mut u = vec![0.0; d1];
        let mut w = vec![0.0; d2];
        let mut z = vec![0.0; d1];
        let mut un = vec![0.0; d1];
        let mut um = vec![0.0; d1];
        let (mut k1, mut k2, mut k3, mut k4) =
            (vec![0.0; d2], vec![0.0; d2], vec![0.0; d2], vec![0.0; d2]);
        let mut tmp = vec![0.0; d2];
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        let joint = |u: &[f64], w: &[f64]| [u, w].concat();
        states.push(joint(&u, &w));
        let slope = |node: usize, uu: &[f64], ww: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            mv_add(&tab.c[node], ww, 1.0, out);
            mv_add(&tab.b[node], uu, 1.0, out);
        };
        for k in 0..steps {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            un.copy_from_slice(&u);
            mv_add(&tab.fast[2 * k], &u, h, &mut un);
            mv_add(&tab.root[2 * k], &z, sqrt_h, &mut un);
            if d2 > 0 {
                for i in 0..d1 {
                    um[i] = 0.5 * (u[i] + un[i]);
                }
                slope(2 * k, &u, &w, &mut k1);
                for i in 0..d2 {
                    tmp[i] = w[i] + 0.5 * h * k1[i];
                }
                slope(2 * k + 1, &um, &tmp, &mut k2);
                for i in 0..d2 {
                    tmp[i] = w[i] + 0.5 * h * k2[i];
                }
                slope(2 * k + 1, &um, &tmp, &mut k3);
                for i in 0..d2 {
                    tmp[i] = w[i] + h * k3[i];
                }
                slope(2 * k + 2, &un, &tmp, &mut k4);
                for i in 0..d2 {
                    w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            u.copy_from_slice(&un);
            if u.iter().chain(&w).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("limit sample path"));
            }
            states.push(joint(&u, &w));
        }
        Ok(output_times
            .iter()
            .map(|&t| {
                let s = (t / h).clamp(0.0, steps as f64);
                let j = (s.floor() as usize).min(steps.saturating_sub(1));
                let th = s - j as f64;
                let (lo, hi) = (&states[j], &states[(j + 1).min(steps)]);
                Vector::from_iterator(
                    d1 + d2,
                    lo.iter().zip(hi).map(|(a, b)| a * (1.0 - th) + b * th),
                )
            })
            .collect())
    })?;
    Ok(LimitSample {
        times: output_times.to_vec(),
        paths,
    })
}

/// `w*(t) = w0 e^{φt/2}` at each of `times`.
pub fn theorem3_slow_law(phi: f64, w0: &[f64], times: &[f64]) -> Vec<Vector> {
    let w0 = Vector::from_column_slice(w0);
    times.iter().map(|&t| &w0 * (0.5 * phi * t).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use crate::stats;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn ou() -> GaussMarkovSpec {
        GaussMarkovSpec::constant(
            scalar(-1.0),
            Matrix::zeros(0, 1),
            Matrix::zeros(0, 0),
            scalar(1.0),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn fundamental_matrix_examples() {
        let minus = |_: f64| Ok(scalar(-1.0));
        let p = fundamental_matrix(&minus, 0.0, 1.0, 1e-3).unwrap();
        assert!((p[(0, 0)] - (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(
            fundamental_matrix(&minus, 0.4, 0.4, 1e-3).unwrap(),
            scalar(1.0)
        );
        let ramp = |t: f64| Ok(scalar(-(1.0 + t)));
        let p = fundamental_matrix(&ramp, 0.0, 1.0, 1e-3).unwrap();
        assert!((p[(0, 0)] - 0.223130160148429828933).abs() < 1e-8);
    }

    #[test]
    fn fundamental_matrix_semigroup() {
        let field = |t: f64| {
            Ok(Matrix::from_row_slice(
                2,
                2,
                &[-1.0 - t, 0.3 * t.sin(), 0.2, -0.5 + 0.1 * t],
            ))
        };
        let dt = 1e-3;
        let (s, r, t) = (0.0, 0.7, 1.5);
        let whole = fundamental_matrix(&field, s, t, dt).unwrap();
        let parts = fundamental_matrix(&field, r, t, dt).unwrap()
            * fundamental_matrix(&field, s, r, dt).unwrap();
        assert!((whole - parts).amax() < 1e-8);
    }

    #[test]
    fn ou_lyapunov_value() {
        let curve = lyapunov_covariance(&ou(), 1.0, 1.0 / 4096.0).unwrap();
        assert!((curve.last()[(0, 0)] - 0.432332358381693654053).abs() < 1e-8);
        assert_eq!(curve.sigmas[0][(0, 0)], 0.0);
        let quiet = GaussMarkovSpec::constant(
            scalar(-1.0),
            Matrix::zeros(0, 1),
            Matrix::zeros(0, 0),
            scalar(0.0),
            0.0,
        )
        .unwrap();
        let curve = lyapunov_covariance(&quiet, 1.0, 1.0 / 256.0).unwrap();
        assert!(curve.sigmas.iter().all(|s| s[(0, 0)] == 0.0));
    }

    #[test]
    fn joint_lyapunov_matches_matrix_exponential() {
        // Van Loan matrix-exponential oracle for F = [[-1, 0], [-1, -1]], D = diag(1, 0), T = 2.
        let spec =
            GaussMarkovSpec::constant(scalar(-1.0), scalar(-1.0), scalar(-1.0), scalar(1.0), 0.0)
                .unwrap();
        let s = lyapunov_covariance(&spec, 2.0, 2.0 / 4096.0).unwrap();
        let s = s.last();
        let expected = [
            0.490842180555632909853,
            -0.227105451389082274633,
            0.190474173611613914045,
        ];
        assert!((s[(0, 0)] - expected[0]).abs() < 1e-6);
        assert!((s[(0, 1)] - expected[1]).abs() < 1e-6);
        assert!((s[(1, 1)] - expected[2]).abs() < 1e-6);
        assert!(crate::linalg::least_eigenvalue(s) >= -1e-10);
    }

    #[test]
    fn variation_of_constants_agrees() {
        let spec = ou();
        let curve = lyapunov_covariance(&spec, 1.0, 1.0 / 4096.0).unwrap();
        // Σ(1) = ∫₀¹ Φ(1,s)² ds by composite Simpson with Φ from the RK4 integrator.
        let m = 200;
        let field = |_: f64| Ok(scalar(-1.0));
        let mut acc = 0.0;
        for k in 0..=m {
            let s = k as f64 / m as f64;
            let phi = fundamental_matrix(&field, s, 1.0, 1e-3).unwrap()[(0, 0)];
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * phi * phi;
        }
        acc /= 3.0 * m as f64;
        assert!((acc - curve.last()[(0, 0)]).abs() < 1e-6);
    }

    #[test]
    fn fast_block_ignores_slow_coefficients() {
        let a =
            GaussMarkovSpec::constant(scalar(-1.0), scalar(-1.0), scalar(-1.0), scalar(1.0), 0.0)
                .unwrap();
        let b =
            GaussMarkovSpec::constant(scalar(-1.0), scalar(3.0), scalar(-0.2), scalar(1.0), 0.0)
                .unwrap();
        let ca = lyapunov_covariance(&a, 2.0, 2.0 / 512.0).unwrap();
        let cb = lyapunov_covariance(&b, 2.0, 2.0 / 512.0).unwrap();
        for (x, y) in ca.sigmas.iter().zip(&cb.sigmas) {
            assert_eq!(x[(0, 0)], y[(0, 0)]);
        }
    }

    #[test]
    fn sampler_examples() {
        let quiet =
            GaussMarkovSpec::constant(scalar(-1.0), scalar(-1.0), scalar(-1.0), scalar(0.0), 0.0)
                .unwrap();
        let s = sample_limit_paths(&quiet, 10, 1.0, 1.0 / 4096.0, 1, &[0.5, 1.0]).unwrap();
        assert!(s.paths.iter().flatten().all(|v| v.amax() == 0.0));

        let zero_phi = GaussMarkovSpec::fast_clock_law(&builtin::p1(), &[0.0], 0.0).unwrap();
        let s = sample_limit_paths(&zero_phi, 20, 1.0, 1.0 / 4096.0, 2, &[1.0]).unwrap();
        assert!(s.paths.iter().all(|p| p[0][1] == 0.0));
    }

    #[test]
    fn sampler_matches_joint_curve() {
        let spec =
            GaussMarkovSpec::constant(scalar(-1.0), scalar(-1.0), scalar(-1.0), scalar(1.0), 0.0)
                .unwrap();
        let s = sample_limit_paths(&spec, 4000, 2.0, 2.0 / 4096.0, 3, &[2.0]).unwrap();
        let emp = stats::covariance(&s.at(0));
        let se = stats::covariance_se(&s.at(0));
        let theory = lyapunov_covariance(&spec, 2.0, 2.0 / 4096.0).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((emp[(r, c)] - theory.last()[(r, c)]).abs() < 4.0 * se[(r, c)]);
            }
        }
    }

    #[test]
    fn slow_path_interpolation() {
        let spec = builtin::p1();
        let path = SlowPath::solve(&spec, &[1.0], 2.0, 64, 1.0).unwrap();
        for &t in &[0.0, 0.013, 0.7, 1.99, 2.0] {
            assert!((path.at(t)[0] - (-t as f64).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn fast_clock_slow_law() {
        assert!(theorem3_slow_law(0.7, &[0.0], &[0.0, 1.0, 5.0])
            .iter()
            .all(|v| v[0] == 0.0));
        assert!(theorem3_slow_law(0.0, &[0.3], &[0.0, 4.0])
            .iter()
            .all(|v| v[0] == 0.3));
        assert!((theorem3_slow_law(1.0, &[1.0], &[2.0])[0][0] - std::f64::consts::E).abs() < 1e-12);
    }
}
