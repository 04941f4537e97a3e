//! Lyapunov covariance of the Gauss–Markov limit, checked against
//! sampled limit paths.

use twoscale_sa::fluct::uniform_grid;
use twoscale_sa::limit::{lyapunov_covariance, sample_limit_paths, GaussMarkovSpec};
use twoscale_sa::linalg::Matrix;
use twoscale_sa::model::builtin;
use twoscale_sa::stats::covariance;

fn main() -> twoscale_sa::Result<()> {
    let ou = GaussMarkovSpec::from_problem(&builtin::ou(), &[], 1.0, 0.0)?;
    let curve = lyapunov_covariance(&ou, 1.0, 1.0 / 4096.0)?;
    println!(
        "OU: Sigma(1) = {:.9}, closed form {:.9}",
        curve.last()[(0, 0)],
        (1.0 - (-2.0f64).exp()) / 2.0
    );

    let horizon = 4.0;
    let dt = horizon / 4096.0;
    // Fast block drives the slow one: F = [[-1, 0], [-1, -1]], D = diag(1, 0).
    let m = |v: f64| Matrix::from_element(1, 1, v);
    let law = GaussMarkovSpec::constant(m(-1.0), m(-1.0), m(-1.0), m(1.0), 0.0)?;
    let curve = lyapunov_covariance(&law, horizon, dt)?;
    let grid = uniform_grid(horizon, 4);
    let sample = sample_limit_paths(&law, 20_000, horizon, dt, 9, &grid)?;
    for (k, &t) in grid.iter().enumerate().skip(1) {
        let emp = covariance(&sample.at(k));
        let th = curve.at(t);
        println!(
            "t = {t:.1}: Var u {:.4} ({:.4}), Cov(u,w) {:.4} ({:.4}), Var w {:.4} ({:.4})",
            emp[(0, 0)],
            th[(0, 0)],
            emp[(0, 1)],
            th[(0, 1)],
            emp[(1, 1)],
            th[(1, 1)]
        );
    }
    Ok(())
}
