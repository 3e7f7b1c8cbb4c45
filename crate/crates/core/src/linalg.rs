//! Thin wrappers over LAPACK-backed dense linear algebra.
//!
//! Everything here operates on `f64` matrices. The solvers only ever need a
//! handful of primitives: Cholesky factors, triangular solves against the
//! factor, symmetric eigenvalues and singular values.

use ndarray::prelude::*;
use ndarray_linalg::{
    triangular::{Diag, SolveTriangular},
    Eigh, Inverse, SVD, UPLO,
};

use crate::error::{CoreError, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(a: &Array2<f64>) -> Result<Array2<f64>> {
    use ndarray_linalg::Cholesky;
    a.cholesky(UPLO::Lower)
        .map_err(|e| CoreError::SingularMatrix(format!("cholesky failed: {e}")))
}

/// Solve `L W = B` for `W` with `L` lower triangular.
pub fn solve_lower(l: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    l.solve_triangular(UPLO::Lower, Diag::NonUnit, b)
        .map_err(|e| CoreError::SingularMatrix(format!("triangular solve failed: {e}")))
}

/// Solve `L^T w = b` for a single right-hand side.
pub fn solve_upper_vec(l: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let bt = b.view().insert_axis(Axis(1)).to_owned();
    let w = l
        .t()
        .to_owned()
        .solve_triangular(UPLO::Upper, Diag::NonUnit, &bt)
        .map_err(|e| CoreError::SingularMatrix(format!("triangular solve failed: {e}")))?;
    Ok(w.index_axis(Axis(1), 0).to_owned())
}

/// Dense inverse (LU based). Used where the full inverse is genuinely needed.
pub fn dense_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    a.inv()
        .map_err(|e| CoreError::SingularMatrix(format!("inversion failed: {e}")))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Array1<f64>> {
    let (e, _) = a
        .eigh(UPLO::Lower)
        .map_err(|e| CoreError::SingularMatrix(format!("eigh failed: {e}")))?;
    Ok(e)
}

/// Singular values (descending, LAPACK convention).
pub fn singular_values(a: &Array2<f64>) -> Result<Array1<f64>> {
    let (_, s, _) = a
        .svd(false, false)
        .map_err(|e| CoreError::SingularMatrix(format!("svd failed: {e}")))?;
    Ok(s)
}

/// `max_i |a_i - b_i|` over two equally shaped arrays.
pub fn max_abs_diff<D: Dimension>(a: &Array<f64, D>, b: &Array<f64, D>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `max_i |a_i|`.
pub fn max_abs<D: Dimension>(a: &Array<f64, D>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Pearson correlation between two equally sized samples.
pub fn pearson(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Median of a sample (averages the two central order statistics).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
