use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_FLOOR: f64 = 1e-12;

/// Row-centered covariance `Zᵀ (I − 11ᵀ/N) Z` of an `N × d` embedding matrix.
pub fn centered_covariance(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n < 2 || d == 0 {
        return Err(Error::input("eigenscore needs at least two non-empty embeddings"));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::input("embeddings have different widths"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::input("embedding contains a non-finite value"));
    }
    let mut z = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = z.column(j).mean();
        z.column_mut(j).add_scalar_mut(-mean);
    }
    Ok(z.transpose() * z)
}

/// `log det(sigma + alpha I)` from the eigenvalues, clamped below at 1e-12.
pub fn regularized_logdet(sigma: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("regularization must be positive, got {alpha}")));
    }
    let mut m = sigma.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += alpha;
    }
    let eig = SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().map(|&l| l.max(EIGEN_FLOOR).ln()).sum())
}

/// `log det(Zᵀ C Z + αI)` through whichever of the `d × d` covariance or the
/// `N × N` Gram matrix `C Z Zᵀ C` is smaller. The two share their nonzero
/// eigenvalues; the larger one has `|d − N|` extra zeros, contributing `ln α` each.
fn centered_logdet(rows: &[Vec<f64>], alpha: f64) -> Result<f64> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d <= n {
        return regularized_logdet(&centered_covariance(rows)?, alpha);
    }
    centered_covariance(&rows[..2])?; // shape and finiteness checks
    if rows.iter().any(|r| r.len() != d) || rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::input("embeddings must share one width and be finite"));
    }
    let mut z = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = z.column(j).mean();
        z.column_mut(j).add_scalar_mut(-mean);
    }
    let gram = &z * z.transpose();
    Ok(regularized_logdet(&gram, alpha)? + (d - n) as f64 * alpha.ln())
}

/// EigenScore: the mean over the `N` responses of `log det(Σ + αI)`. Every
/// term of that mean is the same number; it is evaluated as a sum anyway.
pub fn eigenscore(rows: &[Vec<f64>], reg_alpha: f64) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::input("eigenscore needs at least two non-empty embeddings"));
    }
    let term = centered_logdet(rows, reg_alpha)?;
    let n = rows.len();
    Ok((0..n).map(|_| term).sum::<f64>() / n as f64)
}
