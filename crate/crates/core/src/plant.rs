//! The controlled LTI plant `ẋ = Ax + Bu + B_ω ω, y = Cx` and the closed-form
//! reference and disturbance generators.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{ensure_finite, numerical_rank, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    a: Mat,
    b: Mat,
    c: Mat,
    b_w: Mat,
}

impl LtiPlant {
    /// Validates dimensions, controllability of `(A, B)` and observability of `(A, C)`.
    pub fn new(a: Mat, b: Mat, c: Mat, b_w: Mat) -> Result<Self> {
        for (m, what) in [(&a, "plant A"), (&b, "plant B"), (&c, "plant C"), (&b_w, "plant B_omega")] {
            ensure_finite(m, what)?;
        }
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(dim_err("plant A", "square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(dim_err("plant B", format!("{n}xm"), format!("{}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(dim_err("plant C", format!("px{n}"), format!("{}x{}", c.nrows(), c.ncols())));
        }
        if b_w.nrows() != n || b_w.ncols() == 0 {
            return Err(dim_err("plant B_omega", format!("{n}xl"), format!("{}x{}", b_w.nrows(), b_w.ncols())));
        }
        if numerical_rank(&controllability_matrix(&a, &b)) < n {
            return Err(Error::NotControllable);
        }
        if numerical_rank(&observability_matrix(&a, &c)) < n {
            return Err(Error::NotObservable);
        }
        Ok(Self { a, b, c, b_w })
    }

    /// Disturbance entering through the input channel (`B_ω = B`).
    pub fn with_input_disturbance(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let b_w = b.clone();
        Self::new(a, b, c, b_w)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn b_w(&self) -> &Mat {
        &self.b_w
    }
    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn disturbances(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn derivative(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        self.check_dims(x, u, w)?;
        Ok(&self.a * x + &self.b * u + &self.b_w * w)
    }

    pub fn output(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.states() {
            return Err(dim_err("plant_output x", self.states(), x.len()));
        }
        Ok(&self.c * x)
    }

    fn check_dims(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<()> {
        if x.len() != self.states() {
            return Err(dim_err("plant_derivative x", self.states(), x.len()));
        }
        if u.len() != self.inputs() {
            return Err(dim_err("plant_derivative u", self.inputs(), u.len()));
        }
        if w.len() != self.disturbances() {
            return Err(dim_err("plant_derivative omega", self.disturbances(), w.len()));
        }
        Ok(())
    }
}

/// `[B, AB, …, Aⁿ⁻¹B]`
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// `[C; CA; …; CAⁿ⁻¹]`
pub fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    let n = a.nrows();
    let p = c.nrows();
    let mut out = Mat::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block *= a;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    /// Angular frequency, rad/s.
    pub omega: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub phase: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl SineTerm {
    fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin()
    }
    fn rate(&self, t: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t + self.phase).cos()
    }
}

/// A scalar closed-form signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Signal {
    Zero,
    SumOfSines {
        terms: Vec<SineTerm>,
    },
    /// Sum of sines active on the closed window `[start, end]`, zero elsewhere.
    WindowedSumOfSines {
        start: f64,
        end: f64,
        terms: Vec<SineTerm>,
    },
    /// `amplitude` from `time` onward (until `end`, when given).
    Step {
        time: f64,
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<f64>,
    },
    Composite {
        parts: Vec<Signal>,
    },
}

impl Signal {
    pub fn validate(&self) -> Result<()> {
        let check_terms = |terms: &[SineTerm]| {
            if terms.iter().any(|s| !(s.omega >= 0.0) || !s.amplitude.is_finite() || !s.phase.is_finite()) {
                Err(Error::Config("sine terms need finite amplitude/phase and omega >= 0".into()))
            } else {
                Ok(())
            }
        };
        match self {
            Signal::Zero => Ok(()),
            Signal::SumOfSines { terms } => check_terms(terms),
            Signal::WindowedSumOfSines { start, end, terms } => {
                if !(start < end) {
                    return Err(Error::Config(format!("signal window [{start}, {end}] is not well ordered")));
                }
                check_terms(terms)
            }
            Signal::Step { time, amplitude, end } => {
                if !time.is_finite() || !amplitude.is_finite() {
                    return Err(Error::Config("step time and amplitude must be finite".into()));
                }
                match end {
                    Some(e) if !(time < e) => Err(Error::Config(format!("step window [{time}, {e}] is not well ordered"))),
                    _ => Ok(()),
                }
            }
            Signal::Composite { parts } => parts.iter().try_for_each(Signal::validate),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::SumOfSines { terms } => terms.iter().map(|s| s.value(t)).sum(),
            Signal::WindowedSumOfSines { start, end, terms } => {
                if (*start..=*end).contains(&t) {
                    terms.iter().map(|s| s.value(t)).sum()
                } else {
                    0.0
                }
            }
            Signal::Step { time, amplitude, end } => {
                let active = t >= *time && end.is_none_or(|e| t <= e);
                if active {
                    *amplitude
                } else {
                    0.0
                }
            }
            Signal::Composite { parts } => parts.iter().map(|p| p.eval(t)).sum(),
        }
    }

    /// Closed-form time derivative where one exists everywhere.
    pub fn analytic_rate(&self, t: f64) -> Option<f64> {
        match self {
            Signal::Zero => Some(0.0),
            Signal::SumOfSines { terms } => Some(terms.iter().map(|s| s.rate(t)).sum()),
            Signal::WindowedSumOfSines { .. } | Signal::Step { .. } => None,
            Signal::Composite { parts } => parts.iter().map(|p| p.analytic_rate(t)).sum(),
        }
    }

    /// Analytic derivative, falling back to a central difference of width `2·dt`.
    pub fn rate(&self, t: f64, dt: f64) -> f64 {
        self.analytic_rate(t)
            .unwrap_or_else(|| (self.eval(t + dt) - self.eval(t - dt)) / (2.0 * dt))
    }
}

/// One scalar signal per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalSpec(pub Vec<Signal>);

impl SignalSpec {
    pub fn zero(channels: usize) -> Self {
        Self(vec![Signal::Zero; channels])
    }

    pub fn channels(&self) -> usize {
        self.0.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(Signal::validate)
    }

    pub fn eval(&self, t: f64) -> Vector {
        Vector::from_iterator(self.0.len(), self.0.iter().map(|s| s.eval(t)))
    }

    pub fn eval_into(&self, t: f64, out: &mut Vector) {
        for (o, s) in out.iter_mut().zip(&self.0) {
            *o = s.eval(t);
        }
    }

    pub fn rate(&self, t: f64, dt: f64) -> Vector {
        Vector::from_iterator(self.0.len(), self.0.iter().map(|s| s.rate(t, dt)))
    }

    /// Adds `extra` to channel `channel`.
    pub fn superpose(&mut self, channel: usize, extra: Signal) {
        let slot = &mut self.0[channel];
        let current = std::mem::replace(slot, Signal::Zero);
        *slot = match current {
            Signal::Zero => extra,
            Signal::Composite { mut parts } => {
                parts.push(extra);
                Signal::Composite { parts }
            }
            other => Signal::Composite { parts: vec![other, extra] },
        };
    }
}
