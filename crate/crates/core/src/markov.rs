//! Finite controlled Markov chains: stationary laws, Poisson equations,
//! the martingale/telescoping split of Markov noise, and the effective
//! noise covariance that feeds the limit diffusion.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{AveragedFields, ProblemSpec};

const ROW_SUM_TOL: f64 = 1e-12;
const POISSON_RESIDUAL_TOL: f64 = 1e-10;

/// Row-stochastic transition matrix, `P[(i, j)] = p(j | i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(Matrix);

impl KernelMatrix {
    pub fn new(p: Matrix) -> Result<Self> {
        if p.nrows() != p.ncols() || p.nrows() == 0 {
            return Err(Error::NotStochastic(format!(
                "shape {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        for (i, row) in p.row_iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::NotStochastic(format!(
                    "row {i} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self(p))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let s = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if flat.len() != s * s {
            return Err(Error::NotStochastic("ragged rows".into()));
        }
        Self::new(Matrix::from_row_slice(s, s, &flat))
    }

    /// The one-state chain.
    pub fn trivial() -> Self {
        Self(Matrix::from_element(1, 1, 1.0))
    }

    pub fn states(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    /// Confirms the support graph is a single communicating class.
    pub fn check_irreducible(&self) -> Result<()> {
        let s = self.states();
        let reach = |forward: bool| -> Vec<bool> {
            let mut seen = vec![false; s];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(i) = queue.pop_front() {
                for j in 0..s {
                    let edge = if forward {
                        self.0[(i, j)]
                    } else {
                        self.0[(j, i)]
                    };
                    if edge > 0.0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen
        };
        if let Some(to) = reach(true).iter().position(|&r| !r) {
            return Err(Error::Reducible { from: 0, to });
        }
        if let Some(from) = reach(false).iter().position(|&r| !r) {
            return Err(Error::Reducible { from, to: 0 });
        }
        Ok(())
    }
}

/// Unique stationary distribution of an irreducible kernel.
///
/// Solves `(Pᵀ − I) π = 0` with the last equation replaced by `Σ π = 1`.
pub fn stationary(p: &KernelMatrix) -> Result<Vector> {
    p.check_irreducible()?;
    let s = p.states();
    if s == 1 {
        return Ok(Vector::from_element(1, 1.0));
    }
    let mut a = p.matrix().transpose() - Matrix::identity(s, s);
    let mut rhs = Vector::zeros(s);
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    rhs[s - 1] = 1.0;
    let mut pi = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("stationary distribution"))?;
    if pi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("stationary distribution"));
    }
    for v in pi.iter_mut() {
        // Rounding can leave entries of order -1e-17.
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total = pi.sum();
    pi /= total;
    Ok(pi)
}

/// Solution of the Poisson equation `V = r − 1 r̄ + P V`, `V(i₀) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    /// One row per state, one column per reward component.
    pub v: Matrix,
    /// π-average of the reward field.
    pub rbar: Vector,
    pub normalization_state: usize,
}

impl PoissonSolution {
    /// `V(i)` as a column vector.
    pub fn value(&self, state: usize) -> Vector {
        self.v.row(state).transpose()
    }

    /// Largest residual `‖V(i) − r(i) + r̄ − Σ_j P(i,j)V(j)‖∞`.
    pub fn residual(&self, p: &KernelMatrix, reward: &Matrix) -> f64 {
        let pv = p.matrix() * &self.v;
        let mut worst = 0.0f64;
        for i in 0..self.v.nrows() {
            for k in 0..self.v.ncols() {
                let r = self.v[(i, k)] - reward[(i, k)] + self.rbar[k] - pv[(i, k)];
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// Solves the Poisson equation for reward rows `reward` (S × m).
pub fn poisson_solve(p: &KernelMatrix, reward: &Matrix, i0: usize) -> Result<PoissonSolution> {
    let s = p.states();
    if reward.nrows() != s {
        return Err(Error::LengthMismatch(format!(
            "reward has {} rows for {s} states",
            reward.nrows()
        )));
    }
    if i0 >= s {
        return Err(Error::LengthMismatch(format!(
            "normalization state {i0} of {s}"
        )));
    }
    let pi = stationary(p)?;
    poisson_solve_with(p, &pi, reward, i0)
}

/// As [`poisson_solve`] with a precomputed stationary distribution.
pub fn poisson_solve_with(
    p: &KernelMatrix,
    pi: &Vector,
    reward: &Matrix,
    i0: usize,
) -> Result<PoissonSolution> {
    let s = p.states();
    let m = reward.ncols();
    let rbar: Vector = reward.transpose() * pi;
    if s == 1 {
        return Ok(PoissonSolution {
            v: Matrix::zeros(1, m),
            rbar,
            normalization_state: 0,
        });
    }
    let mut a = Matrix::identity(s, s) - p.matrix();
    let mut rhs = reward.clone();
    for i in 0..s {
        for k in 0..m {
            rhs[(i, k)] -= rbar[k];
        }
    }
    for j in 0..s {
        a[(i0, j)] = if j == i0 { 1.0 } else { 0.0 };
    }
    for k in 0..m {
        rhs[(i0, k)] = 0.0;
    }
    let mut v = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Poisson equation"))?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular("Poisson equation"));
    }
    for k in 0..m {
        v[(i0, k)] = 0.0;
    }
    let sol = PoissonSolution {
        v,
        rbar,
        normalization_state: i0,
    };
    let residual = sol.residual(p, reward);
    if residual > POISSON_RESIDUAL_TOL * (1.0 + reward.amax()) {
        return Err(Error::Singular("Poisson equation (residual check)"));
    }
    Ok(sol)
}

/// Inverse-CDF draw of the successor of `state`: the smallest `j` whose
/// cumulative row mass exceeds `u`.
#[inline]
pub fn sample_next(p: &KernelMatrix, state: usize, u: f64) -> usize {
    let s = p.states();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for j in 0..s {
        let w = p.0[(state, j)];
        if w > 0.0 {
            last_positive = j;
        }
        cum += w;
        if cum > u {
            return j;
        }
    }
    last_positive
}

/// Markov-noise split `Δ_n = ζ_n + τ_n − τ'_{n+1} + e_n`.
///
/// `tau_next[n]` is the telescoping term at `n+1` evaluated with the same
/// frozen parameter as index `n`; when the parameter is fixed along the
/// whole path it coincides with `tau[n+1]`.
#[derive(Debug, Clone, Default)]
pub struct NoiseDecomposition {
    pub zeta: Vec<Vector>,
    pub tau: Vec<Vector>,
    pub tau_next: Vec<Vector>,
    pub e_delta: Vec<Vector>,
}

impl NoiseDecomposition {
    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    /// `ζ_n + τ_n − τ'_{n+1} + e_n`.
    pub fn reconstruct(&self, n: usize) -> Vector {
        &self.zeta[n] + &self.tau[n] - &self.tau_next[n] + &self.e_delta[n]
    }

    /// Largest sup-norm gap between the reconstruction and `deltas`.
    pub fn max_reconstruction_error(&self, deltas: &[Vector]) -> f64 {
        deltas
            .iter()
            .enumerate()
            .map(|(n, d)| (self.reconstruct(n) - d).amax())
            .fold(0.0, f64::max)
    }
}

/// `V(Y_{n+1}) − Σ_j P(Y_n, j) V(j)`.
fn zeta_term(sol: &PoissonSolution, p: &KernelMatrix, from: usize, to: usize) -> Vector {
    let mut z = sol.value(to);
    for j in 0..p.states() {
        let w = p.prob(from, j);
        if w != 0.0 {
            z -= w * sol.value(j);
        }
    }
    z
}

/// Decomposes raw deviations along a path with a fixed frozen parameter.
///
/// `solutions[n]` is the Poisson solution at the `n`-th iterate
/// (`len = states.len()`), `kernels[n]` the kernel that drew
/// `states[n+1]` from `states[n]`, and `deltas[n] = r_n(Y_n) − r̄_n`.
pub fn decompose_noise(
    solutions: &[PoissonSolution],
    kernels: &[KernelMatrix],
    states: &[usize],
    deltas: &[Vector],
) -> Result<NoiseDecomposition> {
    let len = deltas.len();
    if states.len() != len + 1 || solutions.len() != len + 1 || kernels.len() != len {
        return Err(Error::LengthMismatch(format!(
            "{} deltas need {} states and solutions and {} kernels (got {}, {}, {})",
            len,
            len + 1,
            len,
            states.len(),
            solutions.len(),
            kernels.len()
        )));
    }
    let mut out = NoiseDecomposition::default();
    for n in 0..len {
        let (cur, next) = (&solutions[n], &solutions[n + 1]);
        let (yn, yn1) = (states[n], states[n + 1]);
        out.zeta.push(zeta_term(cur, &kernels[n], yn, yn1));
        out.tau.push(cur.value(yn));
        out.tau_next.push(next.value(yn1));
        out.e_delta.push(next.value(yn1) - cur.value(yn1));
    }
    Ok(out)
}

/// Decomposes `Δ^f_n(y_n) = h(x_n, y_n, Y_n) − h̄(x_n, y_n)` along a
/// recorded path, freezing the slow parameter at `y_n` for index `n`.
///
/// Returns the decomposition together with the raw deviations it was
/// built from.
pub fn decompose_fast_noise(
    spec: &ProblemSpec,
    xs: &[Vector],
    ys: &[Vector],
    states: &[usize],
) -> Result<(NoiseDecomposition, Vec<Vector>)> {
    if xs.len() != ys.len() || xs.len() != states.len() || xs.len() < 2 {
        return Err(Error::LengthMismatch(
            "path vectors differ in length".into(),
        ));
    }
    let fields = AveragedFields::new(spec);
    let len = xs.len() - 1;
    let mut out = NoiseDecomposition::default();
    let mut deltas = Vec::with_capacity(len);
    for n in 0..len {
        let (x, x1, y) = (xs[n].as_slice(), xs[n + 1].as_slice(), ys[n].as_slice());
        let kernel = spec.kernel_at(x, y);
        let cur = spec.fast_poisson(x, y)?;
        let next = spec.fast_poisson(x1, y)?;
        let (yn, yn1) = (states[n], states[n + 1]);
        out.zeta.push(zeta_term(&cur, &kernel, yn, yn1));
        out.tau.push(cur.value(yn));
        out.tau_next.push(next.value(yn1));
        out.e_delta.push(next.value(yn1) - cur.value(yn1));
        deltas.push(spec.eval_h(x, y, yn) - fields.hbar(x, y)?);
    }
    Ok((out, deltas))
}

/// `Σ_i π_i [Σ_j P_ij V_j V_jᵀ − m_i m_iᵀ]`, `m_i = Σ_j P_ij V_j`.
pub fn zeta_covariance(p: &KernelMatrix, pi: &Vector, sol: &PoissonSolution) -> Matrix {
    let m = sol.v.ncols();
    let mut cov = Matrix::zeros(m, m);
    for i in 0..p.states() {
        let mut mean = Vector::zeros(m);
        let mut second = Matrix::zeros(m, m);
        for j in 0..p.states() {
            let w = p.prob(i, j);
            if w == 0.0 {
                continue;
            }
            let vj = sol.value(j);
            mean += w * &vj;
            second += w * &vj * vj.transpose();
        }
        cov += pi[i] * (second - &mean * mean.transpose());
    }
    crate::linalg::symmetrize(&mut cov);
    cov
}

/// Which iterate a noise quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Timescale {
    Fast,
    Slow,
}

/// Martingale covariance plus the π-averaged conditional covariance of
/// the Markov martingale term `ζ`, at `(x, y)`.
pub fn effective_noise_covariance(
    spec: &ProblemSpec,
    x: &[f64],
    y: &[f64],
    which: Timescale,
) -> Result<Matrix> {
    let q = match which {
        Timescale::Fast => spec.qf.at(x, y),
        Timescale::Slow => spec.qs.at(x, y),
    };
    if spec.states == 1 {
        return Ok(q);
    }
    let kernel = spec.kernel_at(x, y);
    let pi = spec.stationary_at(x, y)?;
    let sol = match which {
        Timescale::Fast => spec.fast_poisson(x, y)?,
        Timescale::Slow => spec.slow_poisson(x, y)?,
    };
    Ok(q + zeta_covariance(&kernel, &pi, &sol))
}
