//! Modified repetitive controller: a first-order low-pass filter
//! `w_a/(s + w_a)` inside a positive-feedback delay loop of period `T`.
//!
//! ```text
//! ẋ_a(t) = −w_a x_a(t) + w_a x_a(t − T) + w_a ε(t)
//! v(t)   = x_a(t − T) + ε(t)
//! ```

use crate::error::{dim_err, Error, Result};
use crate::numerics::{HistoryBuffer, Vector};

#[derive(Debug, Clone)]
pub struct Mrc {
    w_a: f64,
    period: f64,
    state: Vector,
    history: HistoryBuffer,
}

impl Mrc {
    /// Zero state and zero history on `[−T, 0]`, stored on a grid of `step`.
    pub fn new(w_a: f64, period: f64, step: f64, channels: usize) -> Result<Self> {
        if !(w_a > 0.0 && w_a.is_finite()) {
            return Err(Error::InvalidArgument(format!("MRC cutoff w_a must be positive, got {w_a}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidArgument(format!("MRC period must be positive, got {period}")));
        }
        let history = HistoryBuffer::for_delay(step, period, 0.0, Vector::zeros(channels))?;
        Ok(Self { w_a, period, state: Vector::zeros(channels), history })
    }

    pub fn w_a(&self) -> f64 {
        self.w_a
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn state(&self) -> &Vector {
        &self.state
    }

    pub fn set_state(&mut self, x_a: Vector) {
        self.state = x_a;
    }

    /// Records `x_a` at the next grid time.
    pub fn push_history(&mut self, x_a: Vector) {
        self.history.push(x_a);
    }

    pub fn history(&self) -> &HistoryBuffer {
        &self.history
    }

    /// `x_a(t − T)`.
    pub fn delayed(&self, t: f64) -> Result<&Vector> {
        self.history.sample(t - self.period)
    }

    /// Vector field of the filter state given explicit current and delayed values.
    pub fn field(&self, x_a: &Vector, delayed: &Vector, error: &Vector) -> Vector {
        (delayed - x_a + error) * self.w_a
    }

    pub fn derivative(&self, error: &Vector, t: f64) -> Result<Vector> {
        self.check(error)?;
        let delayed = self.delayed(t)?;
        Ok(self.field(&self.state, delayed, error))
    }

    /// `v(t) = x_a(t − T) + ε(t)`.
    pub fn output(&self, error: &Vector, t: f64) -> Result<Vector> {
        self.check(error)?;
        Ok(self.delayed(t)? + error)
    }

    fn check(&self, error: &Vector) -> Result<()> {
        if error.len() != self.state.len() {
            return Err(dim_err("mrc tracking error", self.state.len(), error.len()));
        }
        Ok(())
    }
}

/// `ε = y_r − y`.
pub fn tracking_error(reference: &Vector, output: &Vector) -> Vector {
    reference - output
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rk4_step;

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn derivative_examples() {
        let mrc = Mrc::new(100.0, 2.0, 1e-3, 1).unwrap();
        assert_eq!(mrc.derivative(&s(0.0), 0.0).unwrap()[0], 0.0);
        assert_eq!(mrc.derivative(&s(1.0), 0.0).unwrap()[0], 100.0);

        // x_a = 0.5 with the same value one period back: loop equilibrium
        let mut mrc = Mrc::new(100.0, 0.002, 1e-3, 1).unwrap();
        for _ in 0..3 {
            mrc.push_history(s(0.5));
        }
        mrc.set_state(s(0.5));
        assert_eq!(mrc.derivative(&s(0.0), 0.002).unwrap()[0], 0.0);
    }

    #[test]
    fn output_examples() {
        let mrc = Mrc::new(100.0, 2.0, 1e-3, 1).unwrap();
        assert_eq!(mrc.output(&s(0.3), 0.0).unwrap()[0], 0.3);

        let mut mrc = Mrc::new(100.0, 0.002, 1e-3, 1).unwrap();
        for _ in 0..3 {
            mrc.push_history(s(0.7));
        }
        assert_eq!(mrc.output(&s(0.0), 0.002).unwrap()[0], 0.7);
        assert!((mrc.output(&s(0.3), 0.002).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tracking_error_examples() {
        assert_eq!(tracking_error(&s(1.0), &s(1.0))[0], 0.0);
        assert!((tracking_error(&s(0.5), &s(0.3))[0] - 0.2).abs() < 1e-15);
        assert_eq!(tracking_error(&s(0.0), &s(0.15))[0], -0.15);
    }

    #[test]
    fn output_is_error_during_first_period() {
        let mut mrc = Mrc::new(100.0, 2.0, 1e-3, 1).unwrap();
        for k in 0..2000 {
            let t = k as f64 * 1e-3;
            let e = s((3.0 * t).sin());
            assert_eq!(mrc.output(&e, t).unwrap(), e);
            mrc.push_history(s(k as f64));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mrc = Mrc::new(100.0, 2.0, 1e-3, 1).unwrap();
        assert!(mrc.output(&Vector::zeros(2), 0.0).is_err());
        assert!(Mrc::new(0.0, 2.0, 1e-3, 1).is_err());
    }

    #[test]
    fn low_pass_step_response() {
        // constant error with the delayed term pinned at zero: x_a = c(1 − e^{−w_a t})
        let (w_a, c, h) = (100.0, 0.8, 1e-4);
        let mrc = Mrc::new(w_a, 2.0, h, 1).unwrap();
        let zero = s(0.0);
        let mut x = s(0.0);
        for k in 1..=1000 {
            x = rk4_step(|_, x| mrc.field(x, &zero, &s(c)), 0.0, &x, h).unwrap();
            let t = k as f64 * h;
            assert!((x[0] - c * (1.0 - (-w_a * t).exp())).abs() < 1e-6);
        }
    }
}
