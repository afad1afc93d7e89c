//! Dense least squares and factorizations shared by the fitting code.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative size under which a diagonal entry of R counts as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares solution of `a · x ≈ b` by Householder QR.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::TooFewPoints { got: m, need: n });
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let largest = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if largest == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= RANK_TOLERANCE * largest) {
        return Err(Error::RankDeficient);
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb).ok_or(Error::RankDeficient)
}

/// Relative size under which a squared Cholesky pivot counts as zero.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower Cholesky factor of a symmetric positive definite matrix, `None`
/// when the matrix is indefinite or numerically singular.
pub fn cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = nalgebra::Cholesky::new(m.clone())?.l();
    let pivots: Vec<f64> = l.diagonal().iter().map(|d| d * d).collect();
    let largest = pivots.iter().copied().fold(0.0, f64::max);
    pivots
        .iter()
        .all(|&p| p.is_finite() && p > PIVOT_TOLERANCE * largest)
        .then_some(l)
}
