//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Least eigenvalue of the symmetric part of `m`.
pub fn least_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s).eigenvalues.min()
}

/// Symmetric PSD square root `G` with `G Gᵀ = Q`.
///
/// Eigenvalues down to `-1e-6·‖Q‖_F` are clipped to zero; anything more
/// negative is rejected.
pub fn sqrt_psd(q: &Matrix) -> Result<Matrix> {
    if q.nrows() != q.ncols() {
        return Err(Error::LengthMismatch(format!(
            "square root of a {}x{} matrix",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sqrt_psd input"));
    }
    let n = q.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if n == 1 {
        let v = q[(0, 0)];
        if v < -1e-6 * v.abs() {
            return Err(Error::NotPsd(v));
        }
        return Ok(Matrix::from_element(1, 1, v.max(0.0).sqrt()));
    }
    let mut s = q.clone();
    symmetrize(&mut s);
    let norm = s.norm();
    let eig = SymmetricEigen::new(s);
    let least = eig.eigenvalues.min();
    if least < -1e-6 * norm {
        return Err(Error::NotPsd(least));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut g = v * Matrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut g);
    Ok(g)
}

/// Block-diagonal matrix with blocks `a` and `b`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut m = Matrix::zeros(n1 + n2, n1 + n2);
    m.view_mut((0, 0), (n1, n1)).copy_from(a);
    m.view_mut((n1, n1), (n2, n2)).copy_from(b);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sqrt_examples() {
        let id = Matrix::identity(3, 3);
        assert!((sqrt_psd(&id).unwrap() - &id).norm() < 1e-14);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let g = sqrt_psd(&d).unwrap();
        assert!((g[(0, 0)] - 2.0).abs() < 1e-14 && (g[(1, 1)] - 3.0).abs() < 1e-14);
        assert!(g[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(sqrt_psd(&m), Err(Error::NotPsd(_))));
        let z = Matrix::zeros(2, 2);
        assert_eq!(sqrt_psd(&z).unwrap(), z);
    }

    proptest! {
        #[test]
        fn sqrt_reconstructs(entries in proptest::collection::vec(-2.0f64..2.0, 16)) {
            let w = Matrix::from_row_slice(4, 4, &entries);
            let q = &w * w.transpose();
            let g = sqrt_psd(&q).unwrap();
            let err = (&g * g.transpose() - &q).norm();
            prop_assert!(err <= 1e-10 * q.norm().max(1.0), "err {err}");
            prop_assert!((&g - g.transpose()).norm() == 0.0);
        }
    }
}
