use super::Vector;
use crate::error::{Error, Result};

/// One classical fourth-order Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(mut f: F, t: f64, x: &Vector, h: f64) -> Result<Vector>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut out = x.clone();
    rk4_step_into(|t, x, dx: &mut Vector| dx.copy_from(&f(t, x)), t, x, h, &mut out)?;
    Ok(out)
}

/// Allocation-light variant: `f` writes the derivative into its third argument.
pub fn rk4_step_into<F>(mut f: F, t: f64, x: &Vector, h: f64, out: &mut Vector) -> Result<()>
where
    F: FnMut(f64, &Vector, &mut Vector),
{
    let n = x.len();
    let mut k1 = Vector::zeros(n);
    let mut k2 = Vector::zeros(n);
    let mut k3 = Vector::zeros(n);
    let mut k4 = Vector::zeros(n);
    let half = 0.5 * h;

    f(t, x, &mut k1);
    let stage = x + &k1 * half;
    f(t + half, &stage, &mut k2);
    let stage = x + &k2 * half;
    f(t + half, &stage, &mut k3);
    let stage = x + &k3 * h;
    f(t + h, &stage, &mut k4);

    for v in [&k1, &k2, &k3, &k4] {
        if v.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("vector field"));
        }
    }
    out.copy_from(x);
    for i in 0..n {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_field() {
        let x0 = Vector::from_vec(vec![1.0, -2.0]);
        let x = rk4_step(|_, x| Vector::zeros(x.len()), 0.0, &x0, 0.1).unwrap();
        assert_eq!(x, x0);
    }

    #[test]
    fn exponential_decay() {
        let x = rk4_step(|_, x| -x, 0.0, &Vector::from_element(1, 1.0), 0.1).unwrap();
        assert_abs_diff_eq!(x[0], (-0.1f64).exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(x[0], 0.9048375, epsilon = 1e-7);
    }

    #[test]
    fn constant_rate_is_exact() {
        let x = rk4_step(|_, _| Vector::from_element(1, 1.0), 0.0, &Vector::zeros(1), 0.25).unwrap();
        assert_eq!(x[0], 0.25);
    }

    #[test]
    fn quartic_in_time_is_exact() {
        // ẋ = 4t³ → x(h) = h⁴
        let x = rk4_step(|t, _| Vector::from_element(1, 4.0 * t.powi(3)), 0.0, &Vector::zeros(1), 0.5).unwrap();
        assert_abs_diff_eq!(x[0], 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_field() {
        let r = rk4_step(|_, _| Vector::from_element(1, f64::NAN), 0.0, &Vector::zeros(1), 0.1);
        assert_eq!(r, Err(Error::NonFinite("vector field")));
    }
}
