//! Classical fourth-order Runge–Kutta integration for vector and matrix
//! ODEs.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};

/// One RK4 step of `ż = f(t, z)` from `(t, z)` with step `h`.
pub fn rk4_step<S, F>(f: &F, t: f64, z: &S, h: f64) -> Result<S>
where
    S: Clone + Add<S, Output = S>,
    for<'a> &'a S: Mul<f64, Output = S>,
    F: Fn(f64, &S) -> Result<S>,
{
    let k1 = f(t, z)?;
    let k2 = f(t + 0.5 * h, &(z.clone() + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(z.clone() + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(z.clone() + &k3 * h))?;
    let incr = (k1 + &k2 * 2.0) + (&k3 * 2.0 + k4);
    Ok(z.clone() + &incr * (h / 6.0))
}

/// Solution of `ż = f(t, z)`, `z(times[0]) = z0`, at each of the
/// increasing `times`, using `substeps` equal RK4 steps per interval.
pub fn rk4_through<S, F>(
    f: &F,
    z0: S,
    times: &[f64],
    substeps: usize,
    finite: impl Fn(&S) -> bool,
) -> Result<Vec<S>>
where
    S: Clone + Add<S, Output = S>,
    for<'a> &'a S: Mul<f64, Output = S>,
    F: Fn(f64, &S) -> Result<S>,
{
    let substeps = substeps.max(1);
    let mut out = Vec::with_capacity(times.len());
    let mut z = z0;
    let Some(&first) = times.first() else {
        return Ok(out);
    };
    out.push(z.clone());
    let mut t = first;
    for &next in &times[1..] {
        let h = (next - t) / substeps as f64;
        if h < 0.0 {
            return Err(Error::LengthMismatch(
                "integration times must increase".into(),
            ));
        }
        if h > 0.0 {
            for k in 0..substeps {
                z = rk4_step(f, t + k as f64 * h, &z, h)?;
            }
        }
        if !finite(&z) {
            return Err(Error::NonFinite("ODE state"));
        }
        t = next;
        out.push(z.clone());
    }
    Ok(out)
}
