//! Adaptive periodic event-triggered transmission of the observer state.
//!
//! The channel is examined only at periodic instants `kT₁`. At each check the
//! error between the held (last transmitted) sample and the current estimate
//! is compared against a state-dependent threshold:
//!
//! ```text
//! ε_oᵀψ₁ε_o ≤ ϱ · x̂ᵀψ₂x̂        (hold)      with ε_o = x̂(t_n) − x̂(kT₁)
//! ```
//!
//! Violation transmits the current sample. In adaptive mode `ϱ` then moves by
//! `κ(x̂(t_n)ᵀψ₁x̂(t_n) − x̂ᵀψ₂x̂)`, saturated to `[ϱ_lo, ϱ_hi]`; in static mode
//! it stays at its initial value.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{is_positive_definite, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    Adaptive,
    Static,
    /// No transmission channel: the controller sees `x̂(t)` at every step.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Transmit,
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerParams {
    pub period: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub rho0: f64,
    pub kappa: f64,
    pub psi1: Mat,
    pub psi2: Mat,
    pub mode: TriggerMode,
}

impl TriggerParams {
    pub fn validate(&self, states: usize) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!("trigger period T1 must be positive, got {}", self.period)));
        }
        if !(0.0 < self.rho_lo && self.rho_lo <= self.rho_hi && self.rho_hi < 1.0) {
            return Err(Error::Config(format!(
                "threshold bounds must satisfy 0 < rho_lo <= rho_hi < 1, got [{}, {}]",
                self.rho_lo, self.rho_hi
            )));
        }
        if !(self.rho_lo..=self.rho_hi).contains(&self.rho0) {
            return Err(Error::Config(format!("rho0 = {} outside [rho_lo, rho_hi]", self.rho0)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        for (m, name) in [(&self.psi1, "psi1"), (&self.psi2, "psi2")] {
            if m.shape() != (states, states) {
                return Err(dim_err("trigger weight", format!("{states}x{states}"), format!("{name} {}x{}", m.nrows(), m.ncols())));
            }
            if !is_positive_definite(m) {
                return Err(Error::Config(format!("trigger weight {name} must be symmetric positive definite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TriggerState {
    params: TriggerParams,
    held: Option<Vector>,
    last_checked: Option<Vector>,
    rho: f64,
    event_log: Vec<f64>,
}

impl TriggerState {
    pub fn new(params: TriggerParams, states: usize) -> Result<Self> {
        params.validate(states)?;
        let rho = params.rho0;
        Ok(Self { params, held: None, last_checked: None, rho, event_log: Vec::new() })
    }

    pub fn params(&self) -> &TriggerParams {
        &self.params
    }

    pub fn mode(&self) -> TriggerMode {
        self.params.mode
    }

    pub fn threshold(&self) -> f64 {
        self.rho
    }

    pub fn event_log(&self) -> &[f64] {
        &self.event_log
    }

    pub fn into_event_log(self) -> Vec<f64> {
        self.event_log
    }

    /// The last transmitted sample `x̂(t_n)`.
    pub fn held_value(&self) -> Option<&Vector> {
        self.held.as_ref()
    }

    /// `ε_oᵀψ₁ε_o` for the current held sample against `x_now`.
    pub fn error_form(&self, x_now: &Vector) -> f64 {
        match &self.held {
            Some(held) => quadratic(&self.params.psi1, &(held - x_now)),
            None => f64::INFINITY,
        }
    }

    /// `ϱ·x̂ᵀψ₂x̂`.
    pub fn threshold_form(&self, x_now: &Vector) -> f64 {
        self.rho * quadratic(&self.params.psi2, x_now)
    }

    /// Periodic check at `t = kT₁`, followed by the threshold update in adaptive mode.
    ///
    /// The very first check always transmits so the hold has a defined value.
    pub fn check_and_update(&mut self, x_now: &Vector, t: f64) -> Result<Decision> {
        let periods = t / self.params.period;
        if !t.is_finite() || (periods - periods.round()).abs() > 1e-9 * periods.abs().max(1.0) {
            return Err(Error::NotOnGrid { t, period: self.params.period });
        }
        if x_now.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trigger sample"));
        }
        if x_now.len() != self.params.psi1.nrows() {
            return Err(dim_err("trigger sample", self.params.psi1.nrows(), x_now.len()));
        }
        let decision = match self.params.mode {
            TriggerMode::Continuous => Decision::Transmit,
            _ if self.held.is_none() => Decision::Transmit,
            _ if self.error_form(x_now) > self.threshold_form(x_now) => Decision::Transmit,
            _ => Decision::Hold,
        };
        if decision == Decision::Transmit {
            self.held = Some(x_now.clone());
            self.event_log.push(t);
        }
        self.last_checked = Some(x_now.clone());
        if self.params.mode == TriggerMode::Adaptive {
            self.update_threshold();
        }
        Ok(decision)
    }

    /// `ϱ ← Sat[ϱ + κ(heldᵀψ₁held − x̂ᵀψ₂x̂)]`, using the most recent check sample.
    pub fn update_threshold(&mut self) -> f64 {
        if let (Some(held), Some(last)) = (&self.held, &self.last_checked) {
            let increment = quadratic(&self.params.psi1, held) - quadratic(&self.params.psi2, last);
            let candidate = self.rho + self.params.kappa * increment;
            // bounds were validated at construction; a NaN candidate pins to the lower bound
            self.rho = if candidate.is_nan() {
                self.params.rho_lo
            } else {
                candidate.clamp(self.params.rho_lo, self.params.rho_hi)
            };
        }
        self.rho
    }
}

/// `min(max(x, lo), hi)`.
pub fn saturate(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidBounds { lo, hi });
    }
    Ok(x.clamp(lo, hi))
}

fn quadratic(m: &Mat, v: &Vector) -> f64 {
    v.dot(&(m * v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mode: TriggerMode, rho0: f64, kappa: f64) -> TriggerParams {
        TriggerParams {
            period: 0.5,
            rho_lo: 0.01,
            rho_hi: 0.99,
            rho0,
            kappa,
            psi1: Mat::identity(3, 3),
            psi2: Mat::identity(3, 3),
            mode,
        }
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn primed(held: &[f64], rho: f64) -> TriggerState {
        let mut s = TriggerState::new(params(TriggerMode::Static, rho, 0.0), 3).unwrap();
        s.check_and_update(&v(held), 0.0).unwrap();
        s
    }

    #[test]
    fn hold_when_nothing_changed() {
        let mut s = primed(&[0.3, -1.0, 2.0], 0.01);
        assert_eq!(s.check_and_update(&v(&[0.3, -1.0, 2.0]), 0.5).unwrap(), Decision::Hold);
    }

    #[test]
    fn zero_estimate_forces_transmit() {
        let mut s = primed(&[1.0, 0.0, 0.0], 0.5);
        assert_eq!(s.check_and_update(&v(&[0.0, 0.0, 0.0]), 0.5).unwrap(), Decision::Transmit);
        assert_eq!(s.held_value().unwrap(), &v(&[0.0, 0.0, 0.0]));
        assert_eq!(s.error_form(&v(&[0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn small_drift_holds() {
        let mut s = primed(&[1.0, 0.0, 0.0], 0.01);
        let x = v(&[1.01, 0.0, 0.0]);
        assert!((s.error_form(&x) - 1e-4).abs() < 1e-15);
        assert!((s.threshold_form(&x) - 1.0201e-2).abs() < 1e-15);
        assert_eq!(s.check_and_update(&x, 0.5).unwrap(), Decision::Hold);
    }

    #[test]
    fn off_grid_check_rejected() {
        let mut s = primed(&[1.0, 0.0, 0.0], 0.01);
        assert!(matches!(s.check_and_update(&v(&[1.0, 0.0, 0.0]), 0.3), Err(Error::NotOnGrid { .. })));
    }

    #[test]
    fn threshold_update_examples() {
        // equal forms: unchanged
        let mut s = TriggerState::new(params(TriggerMode::Adaptive, 0.5, 0.01), 3).unwrap();
        s.check_and_update(&v(&[1.0, 2.0, 3.0]), 0.0).unwrap();
        assert_eq!(s.threshold(), 0.5);

        // held form 2, checked form 1, κ = 0.01 → 0.51
        let mut s = TriggerState::new(params(TriggerMode::Adaptive, 0.5, 0.01), 3).unwrap();
        s.held = Some(v(&[1.0, 1.0, 0.0]));
        s.last_checked = Some(v(&[1.0, 0.0, 0.0]));
        assert!((s.update_threshold() - 0.51).abs() < 1e-15);

        // pushed past the upper bound
        let mut s = TriggerState::new(params(TriggerMode::Adaptive, 0.98, 1.0), 3).unwrap();
        s.held = Some(v(&[(1.22f64).sqrt(), 0.0, 0.0]));
        s.last_checked = Some(v(&[1.0, 0.0, 0.0]));
        assert_eq!(s.update_threshold(), 0.99);
    }

    #[test]
    fn saturate_examples() {
        assert_eq!(saturate(0.5, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(saturate(-3.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(saturate(7.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(saturate(0.5, 1.0, 0.0), Err(Error::InvalidBounds { lo: 1.0, hi: 0.0 }));
    }

    #[test]
    fn held_value_persists() {
        let mut s = primed(&[1.0, 2.0, 3.0], 0.99);
        let v0 = s.held_value().unwrap().clone();
        for k in 1..=3 {
            let d = s.check_and_update(&v(&[1.0, 2.0, 3.01]), k as f64 * 0.5).unwrap();
            assert_eq!(d, Decision::Hold);
            assert_eq!(s.held_value().unwrap(), &v0);
        }
    }

    #[test]
    fn first_check_transmits_zero_state() {
        let mut s = TriggerState::new(params(TriggerMode::Adaptive, 0.01, 0.01), 3).unwrap();
        assert!(s.held_value().is_none());
        assert_eq!(s.check_and_update(&Vector::zeros(3), 0.0).unwrap(), Decision::Transmit);
        assert_eq!(s.held_value().unwrap(), &Vector::zeros(3));
        assert_eq!(s.event_log(), &[0.0]);
    }

    #[test]
    fn invalid_parameters() {
        let mut p = params(TriggerMode::Adaptive, 0.01, 0.01);
        p.rho_hi = 1.0;
        assert!(TriggerState::new(p, 3).is_err());
        let mut p = params(TriggerMode::Adaptive, 0.01, 0.01);
        p.psi1 = Mat::identity(2, 2);
        assert!(TriggerState::new(p, 3).is_err());
        let mut p = params(TriggerMode::Adaptive, 0.5, 0.01);
        p.rho0 = 0.0;
        assert!(TriggerState::new(p, 3).is_err());
    }
}
