//! Built-in test problems with closed-form equilibria and Jacobians.
//!
//! | name       | fast drift `h`            | slow drift `g`          | Markov noise |
//! |------------|---------------------------|-------------------------|--------------|
//! | `P1`       | `−(x − y)`                | `−y`                    | none         |
//! | `P1-fast`  | `−(x − y)`                | `0`, `Qs = 0`           | none         |
//! | `P1-stiff` | `−2(x − y)`               | `−y`                    | none         |
//! | `P2`       | `−(x − y) + c_i`          | `−y`                    | 2 states     |
//! | `P2-fast`  | `−(x − y) + c_i`          | `0`, `Qs = 0`           | 2 states     |
//! | `P3`       | `−(x − tanh y)`           | `−y + 0.1 tanh x`       | none         |
//! | `OU`       | `−x` (no slow iterate)    | n/a                     | none         |
//!
//! `P2` uses `c = (0.5, −1.0)` with kernel `[[0.7, 0.3], [0.6, 0.4]]`, whose
//! stationary law `(2/3, 1/3)` averages `c` to zero.

use std::sync::Arc;

use super::{AnalyticJacobians, NoiseCovariance, ProblemSpec};
use crate::linalg::{Matrix, Vector};
use crate::markov::KernelMatrix;

pub const NAMES: [&str; 7] = ["P1", "P1-fast", "P1-stiff", "P2", "P2-fast", "P3", "OU"];

/// Markov offsets of `P2`.
pub const P2_OFFSETS: [f64; 2] = [0.5, -1.0];

pub fn by_name(name: &str) -> Option<ProblemSpec> {
    Some(match name {
        "P1" => p1(),
        "P1-fast" => p1_fast(),
        "P1-stiff" => p1_stiff(),
        "P2" => p2(),
        "P2-fast" => p2_fast(),
        "P3" => p3(),
        "OU" => ou(),
        _ => return None,
    })
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

fn constant_pair(v: f64) -> Option<super::PairMatrixFn> {
    Some(Arc::new(move |_: &[f64], _: &[f64]| scalar(v)))
}

fn constant_slow(v: f64) -> Option<super::SlowMatrixFn> {
    Some(Arc::new(move |_: &[f64]| scalar(v)))
}

/// Linear pair with fast gain `k`: `h = −k(x − y)`, `g = −y` (or `0`).
fn linear(name: &str, gain: f64, slow_moves: bool, qf: f64, qs: f64) -> ProblemSpec {
    let slow_gain = if slow_moves { -1.0 } else { 0.0 };
    ProblemSpec::new(
        name,
        1,
        1,
        move |x, y, _, out| out[0] = -gain * (x[0] - y[0]),
        move |_, y, _, out| out[0] = slow_gain * y[0],
    )
    .with_noise(NoiseCovariance::scalar(qf), NoiseCovariance::scalar(qs))
    .with_lambda(|y| Vector::from_element(1, y[0]))
    .with_jacobians(AnalyticJacobians {
        hbar_x: constant_pair(-gain),
        hbar_y: constant_pair(gain),
        gbar_x: constant_pair(0.0),
        gbar_y: constant_pair(slow_gain),
        fbar: constant_slow(slow_gain),
        lambda: constant_slow(1.0),
    })
}

pub fn p1() -> ProblemSpec {
    p1_with(1.0, 1.0)
}

pub fn p1_with(qf: f64, qs: f64) -> ProblemSpec {
    linear("P1", 1.0, true, qf, qs)
}

/// `P1` with the slow iterate frozen (`g ≡ 0`, `Qs = 0`).
pub fn p1_fast() -> ProblemSpec {
    p1_fast_with(1.0, 0.0)
}

pub fn p1_fast_with(qf: f64, qs: f64) -> ProblemSpec {
    linear("P1-fast", 1.0, false, qf, qs)
}

/// `h = −2(x − y)`: keeps `A + φ/2 < 0` for `a(n) = C/(n+1)` with `C > 1/4`.
pub fn p1_stiff() -> ProblemSpec {
    linear("P1-stiff", 2.0, true, 1.0, 1.0)
}

fn markov_linear(name: &str, slow_moves: bool, qs: f64) -> ProblemSpec {
    let base = linear(name, 1.0, slow_moves, 1.0, qs);
    let slow_gain = if slow_moves { -1.0 } else { 0.0 };
    let kernel = KernelMatrix::from_rows(&[&[0.7, 0.3], &[0.6, 0.4]]).expect("valid kernel");
    ProblemSpec::new(
        name,
        1,
        1,
        |x, y, i, out| out[0] = -(x[0] - y[0]) + P2_OFFSETS[i],
        move |_, y, _, out| out[0] = slow_gain * y[0],
    )
    .with_constant_kernel(kernel)
    .expect("irreducible kernel")
    .with_noise(base.qf.clone(), base.qs.clone())
    .with_lambda(|y| Vector::from_element(1, y[0]))
    .with_jacobians(base.jacobians.clone())
}

pub fn p2() -> ProblemSpec {
    markov_linear("P2", true, 1.0)
}

pub fn p2_fast() -> ProblemSpec {
    markov_linear("P2-fast", false, 0.0)
}

fn sech2(v: f64) -> f64 {
    let c = v.cosh();
    1.0 / (c * c)
}

/// Nonlinear problem with `λ(y) = tanh y` and `f̄(y) = −y + 0.1 tanh(tanh y)`.
pub fn p3() -> ProblemSpec {
    ProblemSpec::new(
        "P3",
        1,
        1,
        |x, y, _, out| out[0] = -(x[0] - y[0].tanh()),
        |x, y, _, out| out[0] = -y[0] + 0.1 * x[0].tanh(),
    )
    .with_lambda(|y| Vector::from_element(1, y[0].tanh()))
    .with_jacobians(AnalyticJacobians {
        hbar_x: constant_pair(-1.0),
        hbar_y: Some(Arc::new(|_: &[f64], y: &[f64]| scalar(sech2(y[0])))),
        gbar_x: Some(Arc::new(|x: &[f64], _: &[f64]| scalar(0.1 * sech2(x[0])))),
        gbar_y: constant_pair(-1.0),
        fbar: Some(Arc::new(|y: &[f64]| {
            scalar(-1.0 + 0.1 * sech2(y[0].tanh()) * sech2(y[0]))
        })),
        lambda: Some(Arc::new(|y: &[f64]| scalar(sech2(y[0])))),
    })
}

/// Scalar Ornstein–Uhlenbeck iteration `x ← x − a(n)(x + M)`; no slow iterate.
pub fn ou() -> ProblemSpec {
    ProblemSpec::new("OU", 1, 0, |x, _, _, out| out[0] = -x[0], |_, _, _, _| {})
        .with_noise(NoiseCovariance::scalar(1.0), NoiseCovariance::zero(0))
        .with_lambda(|_| Vector::zeros(1))
        .with_jacobians(AnalyticJacobians {
            hbar_x: constant_pair(-1.0),
            hbar_y: Some(Arc::new(|_: &[f64], _: &[f64]| Matrix::zeros(1, 0))),
            gbar_x: Some(Arc::new(|_: &[f64], _: &[f64]| Matrix::zeros(0, 1))),
            gbar_y: Some(Arc::new(|_: &[f64], _: &[f64]| Matrix::zeros(0, 0))),
            fbar: Some(Arc::new(|_: &[f64]| Matrix::zeros(0, 0))),
            lambda: Some(Arc::new(|_: &[f64]| Matrix::zeros(1, 0))),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AveragedFields;

    #[test]
    fn p2_offsets_average_to_zero() {
        let spec = p2();
        let f = AveragedFields::new(&spec);
        let hb = f.hbar(&[0.25], &[1.0]).unwrap();
        assert!((hb[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let spec = p3();
        let f = AveragedFields::new(&spec);
        for &(x, y) in &[(0.3, -0.4), (-1.1, 0.9), (0.0, 2.0)] {
            let cd = crate::model::jacobian_fallible(&|p: &[f64]| f.fbar(p), &[y], None).unwrap();
            let an = f.fbar_jacobian(&[y]).unwrap();
            assert!((cd[(0, 0)] - an[(0, 0)]).abs() < 1e-8);
            let cd =
                crate::model::jacobian_fallible(&|p: &[f64]| f.gbar(p, &[y]), &[x], None).unwrap();
            assert!((cd[(0, 0)] - f.gbar_x(&[x], &[y]).unwrap()[(0, 0)]).abs() < 1e-8);
        }
    }
}
