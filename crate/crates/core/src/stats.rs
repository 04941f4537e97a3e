//! Sample statistics used by the ensemble diagnostics.

use serde::Serialize;

use crate::linalg::{Matrix, Vector};

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Jackknife standard error of the sample mean.
pub fn jackknife_mean_se(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let total: f64 = v.iter().sum();
    let loo: Vec<f64> = v.iter().map(|x| (total - x) / (n - 1) as f64).collect();
    let m = mean(&loo);
    let ss: f64 = loo.iter().map(|t| (t - m) * (t - m)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}

/// Mean vector of equally sized samples.
pub fn mean_vector(samples: &[Vector]) -> Vector {
    let d = samples.first().map_or(0, |s| s.len());
    let mut m = Vector::zeros(d);
    for s in samples {
        m += s;
    }
    m / samples.len().max(1) as f64
}

/// Unbiased sample covariance matrix.
pub fn covariance(samples: &[Vector]) -> Matrix {
    let d = samples.first().map_or(0, |s| s.len());
    let m = mean_vector(samples);
    let mut c = Matrix::zeros(d, d);
    for s in samples {
        let e = s - &m;
        c += &e * e.transpose();
    }
    c / (samples.len().max(2) - 1) as f64
}

/// Standard error of each entry of the sample covariance, from the
/// variance of the centred products `e_i e_j`.
pub fn covariance_se(samples: &[Vector]) -> Matrix {
    let n = samples.len();
    let d = samples.first().map_or(0, |s| s.len());
    let m = mean_vector(samples);
    let c = covariance(samples);
    let mut acc = Matrix::zeros(d, d);
    for s in samples {
        let e = s - &m;
        for i in 0..d {
            for j in 0..d {
                let dev = e[i] * e[j] - c[(i, j)];
                acc[(i, j)] += dev * dev;
            }
        }
    }
    acc.map(|v| (v / (n.max(2) - 1) as f64 / n.max(1) as f64).sqrt())
}

/// Per-component shape statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentShape {
    pub variance: f64,
    /// `None` when the component has zero variance.
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

/// Sample skewness `m3/m2^{3/2}` and excess kurtosis `m4/m2² − 3` of each
/// component, using central moments with divisor `N`.
pub fn gaussianity_stats(samples: &[Vector]) -> Vec<ComponentShape> {
    let n = samples.len() as f64;
    let d = samples.first().map_or(0, |s| s.len());
    let m = mean_vector(samples);
    (0..d)
        .map(|k| {
            let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
            for s in samples {
                let e = s[k] - m[k];
                let e2 = e * e;
                m2 += e2;
                m3 += e2 * e;
                m4 += e2 * e2;
            }
            m2 /= n;
            m3 /= n;
            m4 /= n;
            let degenerate = !(m2 > 1e-300) || m2.sqrt() <= 1e-12 * m[k].abs();
            ComponentShape {
                variance: m2,
                skewness: (!degenerate).then(|| m3 / m2.powf(1.5)),
                excess_kurtosis: (!degenerate).then(|| m4 / (m2 * m2) - 3.0),
            }
        })
        .collect()
}
