//! Deterministic fixed-step closed-loop simulation.
//!
//! The composite continuous state `(x, x̂, x_a, x_f)` is advanced with RK4 at
//! the internal step `δ = h / substeps`; signals are recorded every `h`. At
//! every internal step `t`:
//!
//! 1. `y = Cx`, `ŷ = Cx̂`, `ε = y_r(t) − y`
//! 2. `v = x_a(t − T) + ε`; on the check grid `t = kT₁` the trigger runs first
//!    and may replace the held sample
//! 3. `u_f = k_p x̂_held + k_c v + f₁(t)`
//! 4. `ω̃ = C_f x_f`, `u = u_f − ω̃` (EID on) or `u_f`, `ω̂ = B⁺L(y − ŷ) + ω̃`
//! 5. RK4 over `[t, t + δ]`: exogenous signals and `ε`, `ω̃` are re-evaluated at
//!    each stage; `x̂_held`, `x_a(t − T)` and `f₁` stay at their step values
//! 6. record (on the `h` grid) and push `x_a(t)` into the delay line
//!
//! The delay line lives on the internal grid, so `x_a(t − T)` is always an
//! exact stored sample.

use serde::Serialize;

use crate::apetm::{Decision, TriggerMode, TriggerParams, TriggerState};
use crate::eid::ShapingFilter;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{
    eigenvalues, is_hurwitz, left_pseudo_inverse, rk4_step_into, HistoryBuffer, Mat, Vector,
};
use crate::plant::{LtiPlant, SignalSpec};
use crate::synthesis::{Feedforward, GainSet};

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e9;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: LtiPlant,
    pub gains: GainSet,
    pub filter: ShapingFilter,
    pub eid_enabled: bool,
    pub w_a: f64,
    pub period: f64,
    pub trigger: TriggerParams,
    pub reference: SignalSpec,
    pub disturbance: SignalSpec,
    pub horizon: f64,
    /// Recording step `h`.
    pub h: f64,
    /// RK4 steps per recording step.
    pub substeps: usize,
    pub feedforward: Option<Feedforward>,
    pub x0: Vector,
}

/// Integer step counts derived from a scenario's timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub records: usize,
    pub internal_steps: usize,
    pub substeps: usize,
    pub delay_steps: usize,
    pub check_steps: usize,
    pub internal_step: f64,
}

/// `span / step` when it is an integer up to rounding.
pub fn grid_count(span: f64, step: f64, what: &str) -> Result<usize> {
    let ratio = span / step;
    let rounded = ratio.round();
    if !ratio.is_finite() || ratio < 0.0 || (ratio - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::Config(format!("{what}: {span} is not an integer multiple of {step}")));
    }
    Ok(rounded as usize)
}

impl Scenario {
    pub fn grid(&self) -> Result<Grid> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("step h must be positive, got {}", self.h)));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        let internal_step = self.h / self.substeps as f64;
        let records = grid_count(self.horizon, self.h, "horizon / h")?;
        let check_steps = grid_count(self.trigger.period, self.h, "T1 / h")? * self.substeps;
        let delay_steps = grid_count(self.period, internal_step, "T / internal step")?;
        if check_steps == 0 || delay_steps == 0 {
            return Err(Error::Config("T and T1 must span at least one step".into()));
        }
        Ok(Grid {
            records,
            internal_steps: records * self.substeps,
            substeps: self.substeps,
            delay_steps,
            check_steps,
            internal_step,
        })
    }

    pub fn validate(&self) -> Result<Grid> {
        let grid = self.grid()?;
        let (n, m, p, l) = (self.plant.states(), self.plant.inputs(), self.plant.outputs(), self.plant.disturbances());
        if self.gains.k_p.shape() != (m, n) {
            return Err(dim_err("k_p", format!("{m}x{n}"), format!("{}x{}", self.gains.k_p.nrows(), self.gains.k_p.ncols())));
        }
        if self.gains.k_c.shape() != (m, p) {
            return Err(dim_err("k_c", format!("{m}x{p}"), format!("{}x{}", self.gains.k_c.nrows(), self.gains.k_c.ncols())));
        }
        if self.gains.l.shape() != (n, p) {
            return Err(dim_err("L", format!("{n}x{p}"), format!("{}x{}", self.gains.l.nrows(), self.gains.l.ncols())));
        }
        if self.reference.channels() != p {
            return Err(dim_err("reference channels", p, self.reference.channels()));
        }
        if self.disturbance.channels() != l {
            return Err(dim_err("disturbance channels", l, self.disturbance.channels()));
        }
        if self.x0.len() != n {
            return Err(dim_err("initial state", n, self.x0.len()));
        }
        self.reference.validate()?;
        self.disturbance.validate()?;
        self.filter.validate()?;
        self.trigger.validate(n)?;
        if !(self.w_a > 0.0) {
            return Err(Error::Config("MRC cutoff w_a must be positive".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceDims {
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub disturbances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub y: Vector,
    pub y_r: Vector,
    pub eps: Vector,
    pub u: Vector,
    pub u_f: Vector,
    /// True disturbance.
    pub w: Vector,
    pub w_hat: Vector,
    pub w_tilde: Vector,
    pub x: Vector,
    pub x_hat: Vector,
    pub x_held: Vector,
    pub x_a: Vector,
    pub v: Vector,
    pub rho: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dims: TraceDims,
    pub step: f64,
    pub records: Vec<TraceRecord>,
    pub event_log: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.t)
    }

    /// First-channel tracking error series.
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eps[0]).collect()
    }
}

struct Layout {
    n: usize,
    p: usize,
    m: usize,
}

impl Layout {
    fn x<'a>(&self, s: &'a Vector) -> nalgebra::DVectorView<'a, f64> {
        s.rows(0, self.n)
    }
    fn x_hat<'a>(&self, s: &'a Vector) -> nalgebra::DVectorView<'a, f64> {
        s.rows(self.n, self.n)
    }
    fn x_a<'a>(&self, s: &'a Vector) -> nalgebra::DVectorView<'a, f64> {
        s.rows(2 * self.n, self.p)
    }
    fn x_f<'a>(&self, s: &'a Vector) -> nalgebra::DVectorView<'a, f64> {
        s.rows(2 * self.n + self.p, self.m)
    }
    fn len(&self) -> usize {
        2 * self.n + self.p + self.m
    }
}

/// Quantities evaluated at one instant from the composite state.
struct Signals {
    y: Vector,
    y_hat: Vector,
    y_r: Vector,
    eps: Vector,
    v: Vector,
    u_f: Vector,
    u: Vector,
    w_tilde: Vector,
    w_hat: Vector,
    w: Vector,
}

struct Loop<'a> {
    s: &'a Scenario,
    layout: Layout,
    b_plus_l: Mat,
}

impl Loop<'_> {
    fn signals(&self, t: f64, state: &Vector, delayed: &Vector, held: &Vector, f1: &Vector) -> Signals {
        let lay = &self.layout;
        let plant = &self.s.plant;
        let y = plant.c() * lay.x(state);
        let y_hat = plant.c() * lay.x_hat(state);
        let y_r = self.s.reference.eval(t);
        let eps = &y_r - &y;
        let v = delayed + &eps;
        let u_f = &self.s.gains.k_p * held + &self.s.gains.k_c * &v + f1;
        let w_tilde = lay.x_f(state) * self.s.filter.c_f;
        let u = if self.s.eid_enabled { &u_f - &w_tilde } else { u_f.clone() };
        let w_hat = &self.b_plus_l * (&y - &y_hat) + &w_tilde;
        let w = self.s.disturbance.eval(t);
        Signals { y, y_hat, y_r, eps, v, u_f, u, w_tilde, w_hat, w }
    }

    fn field(&self, t: f64, state: &Vector, delayed: &Vector, held: &Vector, f1: &Vector, out: &mut Vector) {
        let lay = &self.layout;
        let plant = &self.s.plant;
        let sig = self.signals(t, state, delayed, held, f1);
        let dx = plant.a() * lay.x(state) + plant.b() * &sig.u + plant.b_w() * &sig.w;
        let dx_hat = plant.a() * lay.x_hat(state) + plant.b() * &sig.u_f + &self.s.gains.l * (&sig.y - &sig.y_hat);
        let dx_a = (delayed - lay.x_a(state) + &sig.eps) * self.s.w_a;
        let dx_f = lay.x_f(state) * self.s.filter.a_f + &sig.w_hat * self.s.filter.b_f;
        let (n, p, m) = (lay.n, lay.p, lay.m);
        out.rows_mut(0, n).copy_from(&dx);
        out.rows_mut(n, n).copy_from(&dx_hat);
        out.rows_mut(2 * n, p).copy_from(&dx_a);
        out.rows_mut(2 * n + p, m).copy_from(&dx_f);
    }
}

pub fn run_scenario(s: &Scenario) -> Result<Trace> {
    let grid = s.validate()?;
    let (n, m, p, l) = (s.plant.states(), s.plant.inputs(), s.plant.outputs(), s.plant.disturbances());
    let b_plus_l = left_pseudo_inverse(s.plant.b())? * &s.gains.l;
    let lp = Loop { s, layout: Layout { n, p, m }, b_plus_l };
    let lay = &lp.layout;
    let dt = grid.internal_step;

    let mut state = Vector::zeros(lay.len());
    state.rows_mut(0, n).copy_from(&s.x0);
    let mut next = state.clone();
    let mut history = HistoryBuffer::for_delay(dt, s.period, 0.0, Vector::zeros(p))?;
    let mut trigger = TriggerState::new(s.trigger.clone(), n)?;
    let continuous = s.trigger.mode == TriggerMode::Continuous;
    let mut held = Vector::zeros(n);
    let zero_f1 = Vector::zeros(m);

    let mut records = Vec::with_capacity(grid.records + 1);
    for j in 0..=grid.internal_steps {
        let t = j as f64 * dt;
        let delayed = history.sample_index(j as i64 - grid.delay_steps as i64)?.clone();

        let mut event = false;
        if continuous {
            held = lay.x_hat(&state).into_owned();
        } else if j % grid.check_steps == 0 {
            let check_time = (j / grid.substeps) as f64 * s.h;
            let decision = trigger.check_and_update(&lay.x_hat(&state).into_owned(), check_time)?;
            event = decision == Decision::Transmit;
            held = trigger.held_value().expect("first check transmits").clone();
        }
        let f1 = match &s.feedforward {
            Some(ff) if !ff.is_zero() => ff.eval(&s.reference, t),
            _ => zero_f1.clone(),
        };

        if j % grid.substeps == 0 {
            let sig = lp.signals(t, &state, &delayed, &held, &f1);
            let record = TraceRecord {
                t: (j / grid.substeps) as f64 * s.h,
                y: sig.y,
                y_r: sig.y_r,
                eps: sig.eps,
                u: sig.u,
                u_f: sig.u_f,
                w: sig.w,
                w_hat: sig.w_hat,
                w_tilde: sig.w_tilde,
                x: lay.x(&state).into_owned(),
                x_hat: lay.x_hat(&state).into_owned(),
                x_held: held.clone(),
                x_a: lay.x_a(&state).into_owned(),
                v: sig.v,
                rho: trigger.threshold(),
                event,
            };
            if !record_is_finite(&record) {
                return Err(Error::Diverged { t });
            }
            records.push(record);
        }

        history.push(lay.x_a(&state).into_owned());
        if j == grid.internal_steps {
            break;
        }

        rk4_step_into(|tt, x, out| lp.field(tt, x, &delayed, &held, &f1, out), t, &state, dt, &mut next)
            .map_err(|_| Error::Diverged { t: t + dt })?;
        std::mem::swap(&mut state, &mut next);
        if state.iter().any(|v| !v.is_finite()) || state.amax() > DIVERGENCE_BOUND {
            return Err(Error::Diverged { t: t + dt });
        }
    }

    Ok(Trace {
        dims: TraceDims { states: n, inputs: m, outputs: p, disturbances: l },
        step: s.h,
        records,
        event_log: trigger.into_event_log(),
    })
}

fn record_is_finite(r: &TraceRecord) -> bool {
    let vecs = [&r.y, &r.y_r, &r.eps, &r.u, &r.u_f, &r.w, &r.w_hat, &r.w_tilde, &r.x, &r.x_hat, &r.x_held, &r.x_a, &r.v];
    r.rho.is_finite() && vecs.iter().all(|v| v.iter().all(|x| x.is_finite()))
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedBlock {
    pub name: &'static str,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockStability {
    pub name: &'static str,
    pub hurwitz: bool,
    pub spectrum: Vec<(f64, f64)>,
}

/// Coefficient blocks of the closed loop written in the coordinates
/// `(x, x_e, x_a, x_f)` with exogenous inputs set to zero.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisBlocks {
    pub blocks: Vec<NamedBlock>,
    pub stability: Vec<BlockStability>,
}

impl AnalysisBlocks {
    pub fn block(&self, name: &str) -> Option<Mat> {
        self.blocks.iter().find(|b| b.name == name).map(|b| {
            let rows = b.rows.len();
            let cols = b.rows.first().map_or(0, Vec::len);
            Mat::from_fn(rows, cols, |i, j| b.rows[i][j])
        })
    }
}

pub fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn build_analysis_matrices(s: &Scenario) -> Result<AnalysisBlocks> {
    let plant = &s.plant;
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let g = &s.gains;
    if g.k_p.ncols() != plant.states() || g.k_c.ncols() != plant.outputs() || g.l.nrows() != plant.states() {
        return Err(dim_err("analysis gains", "gains matching the plant", "mismatched gains"));
    }
    let m = plant.inputs();
    let p = plant.outputs();
    let b_plus = left_pseudo_inverse(b)?;
    let f = &s.filter;
    let eye_m = Mat::identity(m, m);
    let eye_p = Mat::identity(p, p);

    let observer = a - &g.l * c;
    let filter_loop = &eye_m * (f.a_f + f.b_f * f.c_f);
    let blocks = vec![
        ("A - B k_c C", a - b * &g.k_c * c),
        ("B k_c", b * &g.k_c),
        ("B k_p", b * &g.k_p),
        ("-B C_f", -b * f.c_f),
        ("A - L C", observer.clone()),
        ("-w_a", &eye_p * -s.w_a),
        ("w_a", &eye_p * s.w_a),
        ("-w_a C", c * -s.w_a),
        ("A_f + B_f C_f", filter_loop.clone()),
        ("B_f B+ L C", &b_plus * &g.l * c * f.b_f),
    ];
    let stability = [("A - L C", observer), ("A_f + B_f C_f", filter_loop)]
        .into_iter()
        .map(|(name, mat)| {
            Ok(BlockStability {
                name,
                hurwitz: is_hurwitz(&mat)?,
                spectrum: eigenvalues(&mat)?.iter().map(|z| (z.re, z.im)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisBlocks {
        blocks: blocks.into_iter().map(|(name, m)| NamedBlock { name, rows: rows_of(&m) }).collect(),
        stability,
    })
}
