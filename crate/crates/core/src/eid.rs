//! Equivalent-input-disturbance estimator, its low-pass shaping filter, and
//! the compensated control law.
//!
//! The raw estimate `ω̂ = B⁺L(y − ŷ) + u_f − u` refers to `u`, which in turn
//! is `u_f − ω̃`. Substituting removes the algebraic loop:
//! `ω̂ = B⁺L(y − ŷ) + ω̃`. That resolved form is what is evaluated here.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{left_pseudo_inverse, Mat, Vector};

/// First-order filter `ẋ_f = a_f x_f + b_f ω̂, ω̃ = c_f x_f`, applied per input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingFilter {
    pub a_f: f64,
    pub b_f: f64,
    pub c_f: f64,
}

impl ShapingFilter {
    /// `w_f/(s + w_f)`: `a_f = −w_f, b_f = w_f, c_f = 1`.
    pub fn low_pass(w_f: f64) -> Result<Self> {
        if !(w_f > 0.0 && w_f.is_finite()) {
            return Err(Error::InvalidArgument(format!("EID filter cutoff must be positive, got {w_f}")));
        }
        Ok(Self { a_f: -w_f, b_f: w_f, c_f: 1.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_f < 0.0) || !self.b_f.is_finite() || !self.c_f.is_finite() {
            return Err(Error::Config("EID filter must be stable (a_f < 0) with finite b_f, c_f".into()));
        }
        Ok(())
    }

    /// `−c_f b_f / a_f`
    pub fn dc_gain(&self) -> f64 {
        -self.c_f * self.b_f / self.a_f
    }
}

#[derive(Debug, Clone)]
pub struct Eid {
    filter: ShapingFilter,
    b_plus: Mat,
    /// `B⁺L`, m×p.
    b_plus_l: Mat,
    enabled: bool,
}

impl Eid {
    pub fn new(b: &Mat, l: &Mat, filter: ShapingFilter, enabled: bool) -> Result<Self> {
        filter.validate()?;
        let b_plus = left_pseudo_inverse(b)?;
        if l.nrows() != b.nrows() {
            return Err(dim_err("EID observer gain rows", b.nrows(), l.nrows()));
        }
        let b_plus_l = &b_plus * l;
        Ok(Self { filter, b_plus, b_plus_l, enabled })
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn filter(&self) -> &ShapingFilter {
        &self.filter
    }

    pub fn b_plus(&self) -> &Mat {
        &self.b_plus
    }

    pub fn b_plus_l(&self) -> &Mat {
        &self.b_plus_l
    }

    /// `ω̂ = B⁺L(y − ŷ) + ω̃`.
    pub fn estimate(&self, y: &Vector, y_hat: &Vector, filtered: &Vector) -> Result<Vector> {
        if y.len() != self.b_plus_l.ncols() || y_hat.len() != y.len() {
            return Err(dim_err("EID output", self.b_plus_l.ncols(), y.len().max(y_hat.len())));
        }
        if filtered.len() != self.b_plus_l.nrows() {
            return Err(dim_err("EID filtered estimate", self.b_plus_l.nrows(), filtered.len()));
        }
        Ok(&self.b_plus_l * (y - y_hat) + filtered)
    }

    pub fn filter_derivative(&self, x_f: &Vector, estimate: &Vector) -> Result<Vector> {
        if x_f.len() != estimate.len() {
            return Err(dim_err("EID filter", x_f.len(), estimate.len()));
        }
        Ok(x_f * self.filter.a_f + estimate * self.filter.b_f)
    }

    /// `ω̃ = c_f x_f`
    pub fn filtered(&self, x_f: &Vector) -> Vector {
        x_f * self.filter.c_f
    }

    /// `u = u_f − ω̃` when enabled, `u_f` otherwise.
    pub fn total_control(&self, u_f: &Vector, filtered: &Vector) -> Vector {
        total_control(u_f, filtered, self.enabled)
    }
}

pub fn total_control(u_f: &Vector, filtered: &Vector, enabled: bool) -> Vector {
    if enabled {
        u_f - filtered
    } else {
        u_f.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matrix_exponential, Mat};

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    fn nominal_eid(enabled: bool) -> Eid {
        let b = Mat::from_column_slice(3, 1, &[28.06, 0.0, 0.0]);
        let l = Mat::from_column_slice(3, 1, &[0.52, 2.215, -0.245]);
        Eid::new(&b, &l, ShapingFilter::low_pass(100.0).unwrap(), enabled).unwrap()
    }

    #[test]
    fn estimate_examples() {
        let eid = nominal_eid(true);
        assert_eq!(eid.estimate(&s(0.3), &s(0.3), &s(0.0)).unwrap()[0], 0.0);
        assert_eq!(eid.estimate(&s(0.3), &s(0.3), &s(0.4)).unwrap()[0], 0.4);
        let w = eid.estimate(&s(1.0), &s(0.0), &s(0.0)).unwrap()[0];
        assert!((w - 0.52 / 28.06).abs() < 1e-15);
        assert!((w - 0.018532).abs() < 1e-6);
    }

    #[test]
    fn filter_examples() {
        let eid = nominal_eid(true);
        assert_eq!(eid.filter_derivative(&s(0.0), &s(0.0)).unwrap()[0], 0.0);
        assert_eq!(eid.filter_derivative(&s(0.0), &s(1.0)).unwrap()[0], 100.0);
        assert_eq!(eid.filter_derivative(&s(1.0), &s(1.0)).unwrap()[0], 0.0);
    }

    #[test]
    fn total_control_examples() {
        assert_eq!(total_control(&s(1.0), &s(0.25), true)[0], 0.75);
        assert_eq!(total_control(&s(1.0), &s(123.0), false)[0], 1.0);
        assert_eq!(total_control(&s(0.0), &s(-0.5), true)[0], 0.5);
        assert_eq!(nominal_eid(false).total_control(&s(1.0), &s(9.0))[0], 1.0);
    }

    #[test]
    fn unit_dc_gain() {
        let f = ShapingFilter::low_pass(100.0).unwrap();
        assert!((f.dc_gain() - 1.0).abs() < 1e-9);
        // impulse response decays
        let e = matrix_exponential(&Mat::from_element(1, 1, f.a_f), 0.1).unwrap()[(0, 0)];
        assert!(f.c_f * e * f.b_f < 1e-2);
    }

    #[test]
    fn b_plus_is_left_inverse() {
        let eid = nominal_eid(true);
        let b = Mat::from_column_slice(3, 1, &[28.06, 0.0, 0.0]);
        assert!(((eid.b_plus() * b)[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unstable_filter_rejected() {
        let f = ShapingFilter { a_f: 1.0, b_f: 1.0, c_f: 1.0 };
        let b = Mat::from_column_slice(1, 1, &[1.0]);
        assert!(Eid::new(&b, &b, f, true).is_err());
        assert!(ShapingFilter::low_pass(0.0).is_err());
    }
}
