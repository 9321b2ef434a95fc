//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Singular values in non-increasing order. Empty matrices have none.
pub fn singular_values(m: &DMatrix<f64>, what: &str) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdFailure(format!("{what} (non-finite entries)")));
    }
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::SvdFailure(what.to_string()))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Smallest singular value, i.e. the min(m, n)-th one.
pub fn sigma_min(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    Ok(singular_values(m, what)?.last().copied().unwrap_or(0.0))
}

/// `min_{|z| = 1} |m^T z|`: the `nrows`-th singular value, which is 0 when
/// `m` has more rows than columns.
pub fn row_sigma_min(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    if m.nrows() > m.ncols() {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SvdFailure(format!("{what} (non-finite entries)")));
        }
        return Ok(0.0);
    }
    sigma_min(m, what)
}

/// Largest singular value (operator 2-norm).
pub fn spectral_norm(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    Ok(singular_values(m, what)?.first().copied().unwrap_or(0.0))
}

/// Both extreme singular values from one decomposition.
pub fn extreme_singular_values(m: &DMatrix<f64>, what: &str) -> Result<(f64, f64)> {
    let sv = singular_values(m, what)?;
    let min = sv.last().copied().unwrap_or(0.0);
    let max = sv.first().copied().unwrap_or(0.0);
    Ok((min, max))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest absolute entry of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}
