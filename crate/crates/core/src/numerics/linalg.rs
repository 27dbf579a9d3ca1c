use nalgebra::linalg::Schur;

use super::{Complex, Mat, TOL_HURWITZ, TOL_RANK};
use crate::error::{dim_err, Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

pub fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(m: &Mat, what: &'static str) -> Result<()> {
    if m.is_square() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(dim_err(what, "square matrix", format!("{}x{}", m.nrows(), m.ncols())))
    }
}

/// Builds a matrix from row slices, rejecting ragged or empty input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidArgument("matrix must have at least one row and column".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(dim_err("matrix rows", ncols, bad.len()));
    }
    let m = Mat::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix entries")?;
    Ok(m)
}

/// Eigenvalues through Hessenberg reduction and shifted QR (real Schur form).
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex>> {
    ensure_square(a, "eigenvalues")?;
    ensure_finite(a, "eigenvalues")?;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::NoConvergence("Schur decomposition"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn max_real_part(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Distance of the spectral abscissa from the Hurwitz threshold; positive when Hurwitz.
pub fn spectral_abscissa_margin(a: &Mat) -> Result<f64> {
    Ok(-TOL_HURWITZ - max_real_part(a)?)
}

pub fn is_hurwitz(a: &Mat) -> Result<bool> {
    Ok(max_real_part(a)? < -TOL_HURWITZ)
}

pub fn numerical_rank(m: &Mat) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > TOL_RANK * largest).count()
}

/// Symmetric positive definiteness via Cholesky, after a symmetry check.
pub fn is_positive_definite(m: &Mat) -> bool {
    if !m.is_square() || m.nrows() == 0 {
        return false;
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return false;
    }
    m.clone().cholesky().is_some()
}

/// `(BᵀB)⁻¹Bᵀ` for a full-column-rank `B`.
pub fn left_pseudo_inverse(b: &Mat) -> Result<Mat> {
    ensure_finite(b, "left_pseudo_inverse")?;
    if b.nrows() < b.ncols() || numerical_rank(b) < b.ncols() {
        return Err(Error::RankDeficient);
    }
    let gram = b.transpose() * b;
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    Ok(chol.solve(&b.transpose()))
}
