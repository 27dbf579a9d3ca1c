use super::linalg::{ensure_finite, ensure_square};
use super::Mat;
use crate::error::{Error, Result};

const TAYLOR_TERMS: usize = 20;
const SCALED_NORM: f64 = 0.5;

/// `exp(a·t)` by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 0.5, where 20
/// Taylor terms are accurate to machine precision, then squared back `s` times.
pub fn matrix_exponential(a: &Mat, t: f64) -> Result<Mat> {
    ensure_square(a, "matrix_exponential")?;
    ensure_finite(a, "matrix_exponential")?;
    if !t.is_finite() {
        return Err(Error::NonFinite("matrix_exponential time"));
    }
    let at = a * t;
    let norm = at.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    if !norm.is_finite() {
        return Err(Error::Overflow);
    }
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = at / 2f64.powi(squarings);

    let n = a.nrows();
    let mut result = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for k in 1..=TAYLOR_TERMS {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
        if !result.iter().all(|v| v.is_finite()) {
            return Err(Error::Overflow);
        }
    }
    Ok(result)
}
