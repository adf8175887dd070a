//! Dense symmetric helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn sym_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    symmetrize(m).symmetric_eigenvalues().iter().copied().collect()
}

/// Smallest eigenvalue of the symmetric part of `m` (+inf for empty matrices).
pub fn lambda_min<T: Real>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m)
        .into_iter()
        .fold(T::infinity(), |a, b| if b < a { b } else { a })
}

pub fn lambda_max<T: Real>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m)
        .into_iter()
        .fold(-T::infinity(), |a, b| if b > a { b } else { a })
}

pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |a, &b| if b > a { b } else { a })
}

/// Square root of a symmetric PSD matrix. Eigenvalues down to `-tol` are clipped to zero.
pub fn psd_sqrt<T: Real>(m: &DMatrix<T>, tol: T, what: &'static str) -> Result<DMatrix<T>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        if *v < -tol {
            return Err(Error::NotPositiveDefinite(what));
        }
        *v = if *v > T::zero() { v.sqrt() } else { T::zero() };
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn pd_inv_sqrt<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let scale = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |a, &b| if b.abs() > a { b.abs() } else { a });
    let floor = scale * T::eps() * T::lit(m.nrows().max(1) as f64);
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        if *v <= floor {
            return Err(Error::NotPositiveDefinite(what));
        }
        *v = T::one() / v.sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Inverse of a symmetric positive definite matrix through Cholesky.
pub fn spd_inverse<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(what))?;
    Ok(symmetrize(&chol.inverse()))
}

/// General dense inverse via LU.
pub fn inverse<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Number of entries with magnitude strictly above `threshold`.
pub fn nnz<T: Real>(m: &DMatrix<T>, threshold: T) -> usize {
    m.iter().filter(|v| v.abs() > threshold).count()
}

pub fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.finite())
}

pub fn block_diag<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}
