use super::linalg::{ensure_finite, ensure_square, is_hurwitz};
use super::lyapunov::solve_lyapunov;
use super::{Mat, TOL_CARE};
use crate::error::{dim_err, Error, Result};

const MAX_NEWTON_ITER: usize = 200;

#[derive(Debug, Clone)]
pub struct CareSolution {
    /// Stabilizing solution of `AᵀK + KA − KBR⁻¹BᵀK + Q = 0`.
    pub k: Mat,
    /// Optimal state-feedback gain `R⁻¹BᵀK` (control `u = −gain·x`).
    pub gain: Mat,
    pub residual: f64,
    pub iterations: usize,
}

/// `‖AᵀK + KA − KBR⁻¹BᵀK + Q‖_F / max(1, ‖Q‖_F)`.
pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, k: &Mat) -> Result<f64> {
    let r_inv = r.clone().try_inverse().ok_or(Error::Singular("R"))?;
    let res = a.transpose() * k + k * a - k * b * r_inv * b.transpose() * k + q;
    Ok(res.norm() / q.norm().max(1.0))
}

/// Stabilizing solution of the continuous algebraic Riccati equation.
///
/// Newton–Kleinman iteration: starting from a stabilizing gain `G₀`, each step
/// solves the Lyapunov equation
/// `(A − BGᵢ)ᵀK + K(A − BGᵢ) + Q + GᵢᵀRGᵢ = 0` and sets `Gᵢ₊₁ = R⁻¹BᵀK`.
/// `G₀ = 0` when `A` is already Hurwitz; otherwise it comes from a shifted
/// Lyapunov equation (Bass's eigenvalue-shift construction).
pub fn solve_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<CareSolution> {
    ensure_square(a, "solve_care A")?;
    ensure_square(r, "solve_care R")?;
    for (m, what) in [(a, "solve_care A"), (b, "solve_care B"), (q, "solve_care Q"), (r, "solve_care R")] {
        ensure_finite(m, what)?;
    }
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n {
        return Err(dim_err("solve_care B rows", n, b.nrows()));
    }
    if q.shape() != (n, n) {
        return Err(dim_err("solve_care Q", format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    if r.nrows() != m {
        return Err(dim_err("solve_care R", format!("{m}x{m}"), format!("{}x{}", r.nrows(), r.ncols())));
    }
    let r_inv = r.clone().try_inverse().ok_or(Error::Singular("R"))?;
    if !r_inv.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("R"));
    }
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
        return Err(Error::InvalidArgument("Q must be symmetric".into()));
    }
    if (r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0) || r.clone().cholesky().is_none() {
        return Err(Error::InvalidArgument("R must be symmetric positive definite".into()));
    }

    let mut gain = initial_stabilizing_gain(a, b)?;
    let mut k_prev: Option<Mat> = None;
    for iteration in 1..=MAX_NEWTON_ITER {
        let closed = a - b * &gain;
        let w = q + gain.transpose() * r * &gain;
        let k = solve_lyapunov(&closed, &w).map_err(|_| Error::NonStabilizable)?;
        gain = &r_inv * b.transpose() * &k;

        let converged = k_prev
            .as_ref()
            .is_some_and(|prev| (&k - prev).norm() <= 1e-14 * k.norm().max(1.0));
        if converged {
            let residual = care_residual(a, b, q, r, &k)?;
            if residual >= TOL_CARE {
                return Err(Error::NoConvergence("Newton–Kleinman (residual above tolerance)"));
            }
            if !is_hurwitz(&(a - b * &gain))? {
                return Err(Error::NonStabilizable);
            }
            return Ok(CareSolution { k, gain, residual, iterations: iteration });
        }
        // Newton steps stop shrinking once rounding dominates; accept a
        // certified iterate rather than spinning on noise.
        if iteration > 10 {
            let residual = care_residual(a, b, q, r, &k)?;
            if residual < TOL_CARE * 1e-3 && is_hurwitz(&(a - b * &gain))? {
                return Ok(CareSolution { k, gain, residual, iterations: iteration });
            }
        }
        k_prev = Some(k);
    }
    Err(Error::NoConvergence("Newton–Kleinman"))
}

fn initial_stabilizing_gain(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if is_hurwitz(a)? {
        return Ok(Mat::zeros(b.ncols(), n));
    }
    // (A + βI) is anti-stable for β > ρ(A); with Z solving
    // (A + βI)Z + Z(A + βI)ᵀ = 2BBᵀ, A − BBᵀZ⁺ has spectrum left of −β.
    let beta = a.norm() + 1.0;
    let f = -(a + Mat::identity(n, n) * beta).transpose();
    let z = solve_lyapunov(&f, &(b * b.transpose() * 2.0))?;
    let z_pinv = z
        .pseudo_inverse(1e-12 * beta)
        .map_err(|_| Error::NonStabilizable)?;
    let gain = b.transpose() * z_pinv;
    if is_hurwitz(&(a - b * &gain))? {
        Ok(gain)
    } else {
        Err(Error::NonStabilizable)
    }
}
