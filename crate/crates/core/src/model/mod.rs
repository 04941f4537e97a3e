//! Two-timescale problem definitions.
//!
//! A [`ProblemSpec`] bundles the state-dependent drifts `h(x, y, i)` and
//! `g(x, y, i)`, the controlled kernel driving the Markov noise, the
//! martingale noise covariances and the fast equilibrium map `λ(y)`.
//! [`AveragedFields`] exposes the π-averaged fields `h̄`, `ḡ`,
//! `f̄(y) = ḡ(λ(y), y)` and their Jacobians.

pub mod builtin;

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{least_eigenvalue, sqrt_psd, Matrix, Vector};
use crate::markov::{poisson_solve_with, stationary, KernelMatrix, PoissonSolution};

/// `(x, y, state, out)`: writes a drift value into `out`.
pub type StateField = Arc<dyn Fn(&[f64], &[f64], usize, &mut [f64]) + Send + Sync>;
/// `(x, y) ↦ matrix`.
pub type PairMatrixFn = Arc<dyn Fn(&[f64], &[f64]) -> Matrix + Send + Sync>;
/// `y ↦ vector`.
pub type SlowVectorFn = Arc<dyn Fn(&[f64]) -> Vector + Send + Sync>;
/// `y ↦ matrix`.
pub type SlowMatrixFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
/// `(x, y) ↦ kernel`.
pub type KernelFn = Arc<dyn Fn(&[f64], &[f64]) -> KernelMatrix + Send + Sync>;

/// Transition law of the Markov noise.
#[derive(Clone)]
pub enum KernelModel {
    /// Same kernel at every `(x, y)`; its stationary law is cached.
    Constant {
        kernel: KernelMatrix,
        stationary: Vector,
    },
    /// Iterate-dependent kernel `p_{x,y}`.
    Controlled(KernelFn),
}

/// Conditional covariance of a martingale noise term.
#[derive(Clone)]
pub enum NoiseCovariance {
    Constant { q: Matrix, root: Matrix },
    Dependent(PairMatrixFn),
}

impl NoiseCovariance {
    pub fn constant(q: Matrix) -> Result<Self> {
        let root = sqrt_psd(&q)?;
        Ok(NoiseCovariance::Constant { q, root })
    }

    pub fn scalar(variance: f64) -> Self {
        Self::constant(Matrix::from_element(1, 1, variance)).expect("scalar variance must be >= 0")
    }

    pub fn identity(dim: usize) -> Self {
        let q = Matrix::identity(dim, dim);
        NoiseCovariance::Constant { root: q.clone(), q }
    }

    pub fn zero(dim: usize) -> Self {
        let q = Matrix::zeros(dim, dim);
        NoiseCovariance::Constant { root: q.clone(), q }
    }

    pub fn dependent(f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        NoiseCovariance::Dependent(Arc::new(f))
    }

    pub fn at(&self, x: &[f64], y: &[f64]) -> Matrix {
        match self {
            NoiseCovariance::Constant { q, .. } => q.clone(),
            NoiseCovariance::Dependent(f) => f(x, y),
        }
    }

    /// Symmetric PSD square root at `(x, y)`.
    pub fn root_at(&self, x: &[f64], y: &[f64]) -> Result<Cow<'_, Matrix>> {
        match self {
            NoiseCovariance::Constant { root, .. } => Ok(Cow::Borrowed(root)),
            NoiseCovariance::Dependent(f) => sqrt_psd(&f(x, y)).map(Cow::Owned),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, NoiseCovariance::Constant { q, .. } if q.iter().all(|&v| v == 0.0))
    }

    /// Returns the same covariance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match self {
            NoiseCovariance::Constant { q, .. } => Self::constant(q * factor),
            NoiseCovariance::Dependent(f) => {
                let f = f.clone();
                Ok(Self::dependent(move |x, y| f(x, y) * factor))
            }
        }
    }
}

/// Closed-form Jacobians; any missing entry falls back to central
/// differences.
#[derive(Clone, Default)]
pub struct AnalyticJacobians {
    pub hbar_x: Option<PairMatrixFn>,
    pub hbar_y: Option<PairMatrixFn>,
    pub gbar_x: Option<PairMatrixFn>,
    pub gbar_y: Option<PairMatrixFn>,
    pub fbar: Option<SlowMatrixFn>,
    pub lambda: Option<SlowMatrixFn>,
}

/// A two-timescale problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// Fast dimension.
    pub d1: usize,
    /// Slow dimension.
    pub d2: usize,
    /// Markov state count; 1 means martingale noise only.
    pub states: usize,
    h: StateField,
    g: StateField,
    pub kernel: KernelModel,
    pub qf: NoiseCovariance,
    pub qs: NoiseCovariance,
    lambda: Option<SlowVectorFn>,
    pub jacobians: AnalyticJacobians,
    /// State `i₀` pinned to zero in Poisson solutions.
    pub normalization_state: usize,
    /// Starting point for numerical equilibrium solves.
    pub lambda_guess: Vector,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("states", &self.states)
            .field("analytic_lambda", &self.lambda.is_some())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Martingale-only problem with unit noise; refine with the `with_*`
    /// builders.
    pub fn new<H, G>(name: impl Into<String>, d1: usize, d2: usize, h: H, g: G) -> Self
    where
        H: Fn(&[f64], &[f64], usize, &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], &[f64], usize, &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            d1,
            d2,
            states: 1,
            h: Arc::new(h),
            g: Arc::new(g),
            kernel: KernelModel::Constant {
                kernel: KernelMatrix::trivial(),
                stationary: Vector::from_element(1, 1.0),
            },
            qf: NoiseCovariance::identity(d1),
            qs: NoiseCovariance::identity(d2),
            lambda: None,
            jacobians: AnalyticJacobians::default(),
            normalization_state: 0,
            lambda_guess: Vector::zeros(d1),
        }
    }

    pub fn with_constant_kernel(mut self, kernel: KernelMatrix) -> Result<Self> {
        let pi = stationary(&kernel)?;
        self.states = kernel.states();
        self.kernel = KernelModel::Constant {
            kernel,
            stationary: pi,
        };
        Ok(self)
    }

    pub fn with_controlled_kernel(
        mut self,
        states: usize,
        f: impl Fn(&[f64], &[f64]) -> KernelMatrix + Send + Sync + 'static,
    ) -> Self {
        self.states = states;
        self.kernel = KernelModel::Controlled(Arc::new(f));
        self
    }

    pub fn with_noise(mut self, qf: NoiseCovariance, qs: NoiseCovariance) -> Self {
        self.qf = qf;
        self.qs = qs;
        self
    }

    pub fn with_lambda(mut self, f: impl Fn(&[f64]) -> Vector + Send + Sync + 'static) -> Self {
        self.lambda = Some(Arc::new(f));
        self
    }

    pub fn with_jacobians(mut self, jacobians: AnalyticJacobians) -> Self {
        self.jacobians = jacobians;
        self
    }

    pub fn with_normalization_state(mut self, i0: usize) -> Self {
        self.normalization_state = i0;
        self
    }

    pub fn with_lambda_guess(mut self, guess: Vector) -> Self {
        self.lambda_guess = guess;
        self
    }

    pub fn has_analytic_lambda(&self) -> bool {
        self.lambda.is_some()
    }

    #[inline]
    pub fn h_into(&self, x: &[f64], y: &[f64], state: usize, out: &mut [f64]) {
        (self.h)(x, y, state, out)
    }

    #[inline]
    pub fn g_into(&self, x: &[f64], y: &[f64], state: usize, out: &mut [f64]) {
        (self.g)(x, y, state, out)
    }

    pub fn eval_h(&self, x: &[f64], y: &[f64], state: usize) -> Vector {
        let mut out = Vector::zeros(self.d1);
        self.h_into(x, y, state, out.as_mut_slice());
        out
    }

    pub fn eval_g(&self, x: &[f64], y: &[f64], state: usize) -> Vector {
        let mut out = Vector::zeros(self.d2);
        self.g_into(x, y, state, out.as_mut_slice());
        out
    }

    pub fn kernel_at(&self, x: &[f64], y: &[f64]) -> Cow<'_, KernelMatrix> {
        match &self.kernel {
            KernelModel::Constant { kernel, .. } => Cow::Borrowed(kernel),
            KernelModel::Controlled(f) => Cow::Owned(f(x, y)),
        }
    }

    pub fn stationary_at(&self, x: &[f64], y: &[f64]) -> Result<Vector> {
        match &self.kernel {
            KernelModel::Constant { stationary, .. } => Ok(stationary.clone()),
            KernelModel::Controlled(f) => stationary(&f(x, y)),
        }
    }

    fn reward_rows(&self, x: &[f64], y: &[f64], fast: bool) -> Matrix {
        let dim = if fast { self.d1 } else { self.d2 };
        let mut r = Matrix::zeros(self.states, dim);
        let mut buf = vec![0.0; dim];
        for i in 0..self.states {
            if fast {
                self.h_into(x, y, i, &mut buf);
            } else {
                self.g_into(x, y, i, &mut buf);
            }
            for k in 0..dim {
                r[(i, k)] = buf[k];
            }
        }
        r
    }

    /// `V^f(x, y, ·)` for the fast drift.
    pub fn fast_poisson(&self, x: &[f64], y: &[f64]) -> Result<PoissonSolution> {
        let kernel = self.kernel_at(x, y);
        let pi = self.stationary_at(x, y)?;
        poisson_solve_with(
            &kernel,
            &pi,
            &self.reward_rows(x, y, true),
            self.normalization_state,
        )
    }

    /// `V^s(x, y, ·)` for the slow drift.
    pub fn slow_poisson(&self, x: &[f64], y: &[f64]) -> Result<PoissonSolution> {
        let kernel = self.kernel_at(x, y);
        let pi = self.stationary_at(x, y)?;
        poisson_solve_with(
            &kernel,
            &pi,
            &self.reward_rows(x, y, false),
            self.normalization_state,
        )
    }

    /// Checks the structural invariants at the given probe points.
    ///
    /// Zero covariances are accepted so that noiseless and fast-only test
    /// configurations can be expressed.
    pub fn validate(&self, probes: &[(Vector, Vector)]) -> Result<()> {
        if self.normalization_state >= self.states {
            return Err(Error::InvalidProblem(format!(
                "normalization state {} out of {} states",
                self.normalization_state, self.states
            )));
        }
        let fields = AveragedFields::new(self);
        for (x, y) in probes {
            let (xs, ys) = (x.as_slice(), y.as_slice());
            if xs.len() != self.d1 || ys.len() != self.d2 {
                return Err(Error::LengthMismatch("probe dimension".into()));
            }
            let kernel = self.kernel_at(xs, ys);
            if kernel.states() != self.states {
                return Err(Error::InvalidProblem(
                    "kernel size differs from state count".into(),
                ));
            }
            KernelMatrix::new(kernel.matrix().clone())?;
            kernel.check_irreducible()?;
            for (label, q) in [("Qf", self.qf.at(xs, ys)), ("Qs", self.qs.at(xs, ys))] {
                if (&q - q.transpose()).amax() > 1e-12 {
                    return Err(Error::InvalidProblem(format!("{label} is not symmetric")));
                }
                let least = least_eigenvalue(&q);
                if least < -1e-12 {
                    return Err(Error::NotPsd(least));
                }
            }
            let lam = fields.lambda(ys)?;
            let residual = fields.hbar(lam.as_slice(), ys)?.norm();
            if residual > 1e-8 {
                return Err(Error::InvalidProblem(format!(
                    "h̄(λ(y), y) has norm {residual:e} at y = {:?}",
                    ys
                )));
            }
        }
        Ok(())
    }
}

/// π-averaged drifts of a problem and their derivatives.
#[derive(Clone, Copy)]
pub struct AveragedFields<'a> {
    spec: &'a ProblemSpec,
}

/// Builds the averaged fields of `spec`.
pub fn averaged_fields(spec: &ProblemSpec) -> AveragedFields<'_> {
    AveragedFields::new(spec)
}

const LAMBDA_TOL: f64 = 1e-12;
const LAMBDA_MAX_ITER: usize = 500;

impl<'a> AveragedFields<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &'a ProblemSpec {
        self.spec
    }

    fn average(&self, x: &[f64], y: &[f64], fast: bool) -> Result<Vector> {
        let spec = self.spec;
        let dim = if fast { spec.d1 } else { spec.d2 };
        let eval = |i: usize, out: &mut [f64]| {
            if fast {
                spec.h_into(x, y, i, out)
            } else {
                spec.g_into(x, y, i, out)
            }
        };
        let mut out = Vector::zeros(dim);
        if spec.states == 1 {
            eval(0, out.as_mut_slice());
            return Ok(out);
        }
        let pi = spec.stationary_at(x, y)?;
        let mut buf = vec![0.0; dim];
        for i in 0..spec.states {
            eval(i, &mut buf);
            for k in 0..dim {
                out[k] += pi[i] * buf[k];
            }
        }
        Ok(out)
    }

    /// `h̄(x, y) = Σ_i π_{x,y}(i) h(x, y, i)`.
    pub fn hbar(&self, x: &[f64], y: &[f64]) -> Result<Vector> {
        self.average(x, y, true)
    }

    /// `ḡ(x, y) = Σ_i π_{x,y}(i) g(x, y, i)`.
    pub fn gbar(&self, x: &[f64], y: &[f64]) -> Result<Vector> {
        self.average(x, y, false)
    }

    /// Equilibrium `λ(y)` of `ẋ = h̄(x, y)`.
    pub fn lambda(&self, y: &[f64]) -> Result<Vector> {
        match &self.spec.lambda {
            Some(f) => Ok(f(y)),
            None => lambda_solve(
                self.spec,
                y,
                self.spec.lambda_guess.as_slice(),
                LAMBDA_TOL,
                LAMBDA_MAX_ITER,
            ),
        }
    }

    /// `f̄(y) = ḡ(λ(y), y)`.
    pub fn fbar(&self, y: &[f64]) -> Result<Vector> {
        let lam = self.lambda(y)?;
        self.gbar(lam.as_slice(), y)
    }

    pub fn hbar_x(&self, x: &[f64], y: &[f64]) -> Result<Matrix> {
        match &self.spec.jacobians.hbar_x {
            Some(f) => Ok(f(x, y)),
            None => jacobian_fallible(&|p: &[f64]| self.hbar(p, y), x, None),
        }
    }

    pub fn hbar_y(&self, x: &[f64], y: &[f64]) -> Result<Matrix> {
        match &self.spec.jacobians.hbar_y {
            Some(f) => Ok(f(x, y)),
            None => jacobian_fallible(&|p: &[f64]| self.hbar(x, p), y, None),
        }
    }

    pub fn gbar_x(&self, x: &[f64], y: &[f64]) -> Result<Matrix> {
        match &self.spec.jacobians.gbar_x {
            Some(f) => Ok(f(x, y)),
            None => jacobian_fallible(&|p: &[f64]| self.gbar(p, y), x, None),
        }
    }

    pub fn gbar_y(&self, x: &[f64], y: &[f64]) -> Result<Matrix> {
        match &self.spec.jacobians.gbar_y {
            Some(f) => Ok(f(x, y)),
            None => jacobian_fallible(&|p: &[f64]| self.gbar(x, p), y, None),
        }
    }

    /// `∇f̄(y)`.
    pub fn fbar_jacobian(&self, y: &[f64]) -> Result<Matrix> {
        match &self.spec.jacobians.fbar {
            Some(f) => Ok(f(y)),
            None => jacobian_fallible(&|p: &[f64]| self.fbar(p), y, None),
        }
    }

    /// `∇λ(y)`.
    pub fn lambda_jacobian(&self, y: &[f64]) -> Result<Matrix> {
        match &self.spec.jacobians.lambda {
            Some(f) => Ok(f(y)),
            None => jacobian_fallible(&|p: &[f64]| self.lambda(p), y, None),
        }
    }
}

/// How [`jacobian`] obtains the matrix.
pub enum JacobianMode<'a> {
    /// Use the supplied closed form.
    Analytic(&'a dyn Fn(&[f64]) -> Matrix),
    /// Central differences with step `δ`, default `1e-5·max(1, ‖p‖)`.
    CentralDifference { step: Option<f64> },
}

/// Jacobian of `field` at `point`.
pub fn jacobian(
    field: &dyn Fn(&[f64]) -> Vector,
    point: &[f64],
    mode: JacobianMode<'_>,
) -> Result<Matrix> {
    match mode {
        JacobianMode::Analytic(f) => {
            let m = f(point);
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("analytic Jacobian"));
            }
            Ok(m)
        }
        JacobianMode::CentralDifference { step } => {
            jacobian_fallible(&|p: &[f64]| Ok(field(p)), point, step)
        }
    }
}

/// Central-difference Jacobian of a fallible field.
pub fn jacobian_fallible(
    field: &dyn Fn(&[f64]) -> Result<Vector>,
    point: &[f64],
    step: Option<f64>,
) -> Result<Matrix> {
    let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
    let delta = step.unwrap_or(1e-5 * norm.max(1.0));
    let mut probe = point.to_vec();
    let mut columns = Vec::with_capacity(point.len());
    let mut rows = None;
    for j in 0..point.len() {
        probe[j] = point[j] + delta;
        let plus = field(&probe)?;
        probe[j] = point[j] - delta;
        let minus = field(&probe)?;
        probe[j] = point[j];
        if plus.iter().chain(minus.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field value at a difference probe"));
        }
        rows = Some(plus.len());
        columns.push((plus - minus) / (2.0 * delta));
    }
    let rows = match rows {
        Some(r) => r,
        None => field(point)?.len(),
    };
    let mut m = Matrix::zeros(rows, point.len());
    for (j, col) in columns.into_iter().enumerate() {
        m.set_column(j, &col);
    }
    Ok(m)
}

/// Root `x` of `h̄(·, y)` with `‖h̄(x, y)‖ ≤ tol`.
///
/// Damped Newton (step halving down to 1/64) on the Jacobian of `h̄`;
/// when no damped step lowers the residual, one forward-Euler step of
/// `ẋ = h̄(x, y)` is taken instead.
pub fn lambda_solve(
    spec: &ProblemSpec,
    y: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vector> {
    const EULER_STEP: f64 = 0.1;
    let fields = AveragedFields::new(spec);
    let mut x = Vector::from_column_slice(x0);
    let mut r = fields.hbar(x.as_slice(), y)?;
    let mut res = r.norm();
    for _ in 0..max_iter {
        if res <= tol {
            return Ok(x);
        }
        let mut accepted = false;
        let jac = fields.hbar_x(x.as_slice(), y)?;
        if let Some(dir) = jac.lu().solve(&(-&r)) {
            if dir.iter().all(|v| v.is_finite()) {
                let mut damping = 1.0;
                while damping >= 1.0 / 64.0 {
                    let trial = &x + damping * &dir;
                    let tr = fields.hbar(trial.as_slice(), y)?;
                    let tres = tr.norm();
                    if tres < res {
                        x = trial;
                        r = tr;
                        res = tres;
                        accepted = true;
                        break;
                    }
                    damping *= 0.5;
                }
            }
        }
        if !accepted {
            x += EULER_STEP * &r;
            r = fields.hbar(x.as_slice(), y)?;
            res = r.norm();
        }
        if !res.is_finite() {
            return Err(Error::NonFinite("equilibrium solve"));
        }
    }
    if res <= tol {
        return Ok(x);
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        residual: res,
    })
}
