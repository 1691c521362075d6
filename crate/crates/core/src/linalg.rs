//! Thin bridge to `nalgebra` for the factorizations the crate needs.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub(crate) fn to_dm(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub(crate) fn from_dm(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

/// Singular values in descending order.
pub(crate) fn singular_values(m: &Matrix) -> Vec<f64> {
    SVD::new(to_dm(m), false, false).singular_values.iter().copied().collect()
}

/// Orthonormal basis of `{x : m x = 0}` where singular values at or below
/// `rel_tol * sigma_max * max(rows, cols)` count as zero.
pub(crate) fn null_space(m: &Matrix, rel_tol: f64) -> Vec<Vec<f64>> {
    let (r, c) = (m.rows(), m.cols());
    // pad with zero rows so the thin SVD returns a full right basis
    let mut dm = DMatrix::<f64>::zeros(r.max(c), c);
    dm.view_mut((0, 0), (r, c)).copy_from(&to_dm(m));
    let svd = SVD::new(dm, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let thresh = rel_tol * smax * r.max(c) as f64;
    (0..sigma.len())
        .filter(|&k| sigma[k] <= thresh)
        .map(|k| v_t.row(k).iter().copied().collect())
        .collect()
}

/// Right singular vector of the smallest singular value.
pub(crate) fn smallest_right_singular_vector(m: &Matrix) -> Vec<f64> {
    let (r, c) = (m.rows(), m.cols());
    let mut dm = DMatrix::<f64>::zeros(r.max(c), c);
    dm.view_mut((0, 0), (r, c)).copy_from(&to_dm(m));
    let svd = SVD::new(dm, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    v_t.row(c - 1).iter().copied().collect()
}

/// Left singular vectors for the `k` largest singular values, as columns.
pub(crate) fn leading_left_vectors(m: &Matrix, k: usize) -> DMatrix<f64> {
    let svd = SVD::new(to_dm(m), true, false);
    svd.u.expect("u requested").columns(0, k).into_owned()
}

/// Minimum-norm least-squares solution of `a x = b`.
pub(crate) fn lstsq(a: &Matrix, b: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let svd = SVD::new(to_dm(a), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = rel_tol * smax * a.rows().max(a.cols()) as f64;
    let x = svd.solve(&to_dm(b), eps).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok(from_dm(&x))
}

/// Solves `x a = b` for `x` in the least-squares sense.
pub(crate) fn lstsq_right(a: &Matrix, b: &Matrix, rel_tol: f64) -> Result<Matrix> {
    Ok(lstsq(&a.transpose(), &b.transpose(), rel_tol)?.transpose())
}

/// Real eigenvalues of a square matrix, or `None` when some are complex.
pub(crate) fn real_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    m.clone().schur().eigenvalues().map(|v| v.iter().copied().collect())
}

/// Eigenvector of `m` for the (real, simple) eigenvalue `lambda`.
pub(crate) fn eigenvector(m: &DMatrix<f64>, lambda: f64) -> Vec<f64> {
    let n = m.nrows();
    let shifted = m - DMatrix::<f64>::identity(n, n) * lambda;
    smallest_right_singular_vector(&from_dm(&shifted))
}
