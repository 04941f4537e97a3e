//! Stationary law, Poisson solution and the Markov-noise diffusion inflation.

use twoscale_sa::linalg::Matrix;
use twoscale_sa::markov::{
    effective_noise_covariance, poisson_solve, stationary, zeta_covariance, KernelMatrix, Timescale,
};
use twoscale_sa::model::builtin;

fn main() -> twoscale_sa::Result<()> {
    let p = KernelMatrix::from_rows(&[&[0.7, 0.3], &[0.6, 0.4]])?;
    let pi = stationary(&p)?;
    let reward = Matrix::from_row_slice(2, 1, &[1.0, 0.0]);
    let sol = poisson_solve(&p, &reward, 0)?;
    println!("pi = ({:.6}, {:.6})", pi[0], pi[1]);
    println!(
        "V  = ({:.6}, {:.6}), residual {:.1e}",
        sol.v[(0, 0)],
        sol.v[(1, 0)],
        sol.residual(&p, &reward)
    );
    println!("Cov(zeta) = {:.6}", zeta_covariance(&p, &pi, &sol)[(0, 0)]);

    let (x, y) = ([0.0], [0.0]);
    let p1 = effective_noise_covariance(&builtin::p1(), &x, &y, Timescale::Fast)?;
    let p2 = effective_noise_covariance(&builtin::p2(), &x, &y, Timescale::Fast)?;
    println!(
        "fast effective covariance: P1 {:.6}, P2 {:.6}",
        p1[(0, 0)],
        p2[(0, 0)]
    );
    println!(
        "inflation (Qf + Cov zeta)/Qf = {:.6}",
        p2[(0, 0)] / p1[(0, 0)]
    );
    Ok(())
}
