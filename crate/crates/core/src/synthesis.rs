//! Optimal gain synthesis on the tracking-augmented plant.
//!
//! The plant is augmented with the tracking error and a low-pass filtered copy
//! of it (cutoff `ω_c`):
//!
//! ```text
//!      ⎡ A          0   0    ⎤        ⎡  B  ⎤        ⎡ 0   ⎤         ⎡ 0 ⎤
//! Ā =  ⎢ −C − CA    −I  0    ⎥   B̄ =  ⎢ −CB ⎥   D̄ =  ⎢ I   ⎥   D̄₁ =  ⎢ I ⎥
//!      ⎣ −ω_cC − CA  0  −ω_cI⎦        ⎣ −CB ⎦        ⎣ ω_cI⎦         ⎣ I ⎦
//! ```
//!
//! The stabilizing Riccati solution `K` of `(Ā, B̄, Q_z, R)` yields the
//! state gain `k_p = −R⁻¹B̄ᵀK_x` and the repetitive gain `k_c = −R⁻¹B̄ᵀK_v`.
//! `K_x` is the plant-state column block of `K`. Which column is `K_v` is not
//! pinned down by the block layout, so both candidates are produced (see
//! [`Partition`]).

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{
    care_residual, eigenvalues, is_hurwitz, matrix_exponential, solve_care, Complex, Mat, Vector,
};
use crate::plant::{LtiPlant, SignalSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub a_bar: Mat,
    pub b_bar: Mat,
    pub d_bar: Mat,
    pub d1_bar: Mat,
    pub plant_states: usize,
    pub omega_c: f64,
}

impl AugmentedSystem {
    pub fn dim(&self) -> usize {
        self.a_bar.nrows()
    }
}

pub fn build_augmented(plant: &LtiPlant, omega_c: f64) -> Result<AugmentedSystem> {
    if plant.outputs() != 1 {
        return Err(Error::UnsupportedMultiOutput(plant.outputs()));
    }
    if !omega_c.is_finite() {
        return Err(Error::NonFinite("omega_c"));
    }
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let n = plant.states();
    let m = plant.inputs();
    let nb = n + 2;
    let ca = c * a;
    let cb = c * b;

    let mut a_bar = Mat::zeros(nb, nb);
    a_bar.view_mut((0, 0), (n, n)).copy_from(a);
    a_bar.view_mut((n, 0), (1, n)).copy_from(&(-c - &ca));
    a_bar[(n, n)] = -1.0;
    a_bar.view_mut((n + 1, 0), (1, n)).copy_from(&(-c * omega_c - &ca));
    a_bar[(n + 1, n + 1)] = -omega_c;

    let mut b_bar = Mat::zeros(nb, m);
    b_bar.view_mut((0, 0), (n, m)).copy_from(b);
    b_bar.view_mut((n, 0), (1, m)).copy_from(&(-&cb));
    b_bar.view_mut((n + 1, 0), (1, m)).copy_from(&(-&cb));

    let mut d_bar = Mat::zeros(nb, 1);
    d_bar[(n, 0)] = 1.0;
    d_bar[(n + 1, 0)] = omega_c;
    let mut d1_bar = Mat::zeros(nb, 1);
    d1_bar[(n, 0)] = 1.0;
    d1_bar[(n + 1, 0)] = 1.0;

    Ok(AugmentedSystem { a_bar, b_bar, d_bar, d1_bar, plant_states: n, omega_c })
}

/// Which column of `K` plays the role of `K_v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// Column `n + 2`: the filtered-error coordinate.
    LastColumn,
    /// Column `n + 1`: the error coordinate.
    ErrorColumn,
}

impl Partition {
    pub const ALL: [Partition; 2] = [Partition::LastColumn, Partition::ErrorColumn];

    pub fn column(self, plant_states: usize) -> usize {
        match self {
            Partition::LastColumn => plant_states + 1,
            Partition::ErrorColumn => plant_states,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    /// m×n state-feedback gain on the held estimate.
    pub k_p: Mat,
    /// m×1 gain on the repetitive-controller output.
    pub k_c: Mat,
    /// Riccati solution the gains came from.
    pub k: Mat,
    pub l: Mat,
    /// `None` for gains supplied directly rather than read off `K`.
    pub partition: Option<Partition>,
}

impl GainSet {
    pub fn fixed(k_p: Mat, k_c: Mat, k: Mat, l: Mat) -> Self {
        Self { k_p, k_c, k, l, partition: None }
    }
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub k: Mat,
    pub residual: f64,
    pub iterations: usize,
    /// Indexed like [`Partition::ALL`].
    pub candidates: [GainSet; 2],
}

impl Synthesis {
    pub fn gains(&self, partition: Partition) -> &GainSet {
        &self.candidates[Partition::ALL.iter().position(|&p| p == partition).unwrap()]
    }
}

/// Solves the Riccati equation on the augmented system and extracts both
/// candidate gain sets.
pub fn synthesize_gains(aug: &AugmentedSystem, q_z: &Mat, r: &Mat, l: &Mat) -> Result<Synthesis> {
    let sol = solve_care(&aug.a_bar, &aug.b_bar, q_z, r)?;
    let r_inv = r.clone().try_inverse().ok_or(Error::Singular("R"))?;
    let n = aug.plant_states;
    let nb = aug.dim();
    let lead = -(&r_inv * aug.b_bar.transpose());
    let k_p = &lead * sol.k.view((0, 0), (nb, n));
    let candidates = Partition::ALL.map(|partition| {
        let col = partition.column(n);
        GainSet {
            k_p: k_p.clone(),
            k_c: &lead * sol.k.view((0, col), (nb, 1)),
            k: sol.k.clone(),
            l: l.clone(),
            partition: Some(partition),
        }
    });
    Ok(Synthesis { k: sol.k, residual: sol.residual, iterations: sol.iterations, candidates })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedLoopReport {
    pub residual: f64,
    pub hurwitz: bool,
    pub symmetric: bool,
    pub min_eigenvalue_k: f64,
    pub spectrum: Vec<(f64, f64)>,
}

impl ClosedLoopReport {
    /// Residual below tolerance, Hurwitz closed loop, and `K` symmetric PSD.
    pub fn certified(&self) -> bool {
        self.residual < crate::numerics::TOL_CARE && self.hurwitz && self.symmetric && self.min_eigenvalue_k >= -1e-10
    }
}

pub fn verify_closed_loop(aug: &AugmentedSystem, k: &Mat, q_z: &Mat, r: &Mat) -> Result<ClosedLoopReport> {
    let residual = care_residual(&aug.a_bar, &aug.b_bar, q_z, r, k)?;
    let r_inv = r.clone().try_inverse().ok_or(Error::Singular("R"))?;
    let closed = &aug.a_bar - &aug.b_bar * r_inv * aug.b_bar.transpose() * k;
    let spectrum: Vec<Complex> = eigenvalues(&closed)?;
    let symmetric = (k - k.transpose()).norm() < 1e-10 * k.norm().max(1.0);
    let sym = (k + k.transpose()) * 0.5;
    let min_eigenvalue_k = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ClosedLoopReport {
        residual,
        hurwitz: is_hurwitz(&closed)?,
        symmetric,
        min_eigenvalue_k,
        spectrum: spectrum.iter().map(|c| (c.re, c.im)).collect(),
    })
}

/// `u_f = k_p x̂(t_n) + k_c v + f₁`.
pub fn feedback_law(gains: &GainSet, x_held: &Vector, v: &Vector, f1: &Vector) -> Result<Vector> {
    if x_held.len() != gains.k_p.ncols() {
        return Err(dim_err("feedback_law x_held", gains.k_p.ncols(), x_held.len()));
    }
    if v.len() != gains.k_c.ncols() {
        return Err(dim_err("feedback_law v", gains.k_c.ncols(), v.len()));
    }
    if f1.len() != gains.k_p.nrows() {
        return Err(dim_err("feedback_law f1", gains.k_p.nrows(), f1.len()));
    }
    Ok(&gains.k_p * x_held + &gains.k_c * v + f1)
}

/// Preview feedforward with the quadrature weights folded into per-node
/// matrices, so evaluation at a time `t` costs one pass over the nodes.
///
/// ```text
/// f₁(t) = −R⁻¹B̄ᵀ ∫₀^{t_r} e^{A_c δ} K D̄ r(t+δ) dδ − R⁻¹B̄ᵀ ∫₀^{t_r} e^{−A_c δ} K D̄₁ ṙ(t+δ) dδ
/// A_c   = Āᵀ − K B̄ R⁻¹ B̄ᵀ
/// ```
///
/// Composite Simpson rule with an even node count and spacing at most `quad_step`.
#[derive(Debug, Clone)]
pub struct Feedforward {
    offsets: Vec<f64>,
    on_reference: Vec<Mat>,
    on_rate: Vec<Mat>,
    quad_step: f64,
    inputs: usize,
}

impl Feedforward {
    pub fn new(k: &Mat, aug: &AugmentedSystem, r: &Mat, horizon: f64, quad_step: f64) -> Result<Self> {
        let inputs = aug.b_bar.ncols();
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("preview horizon must be >= 0, got {horizon}")));
        }
        if !(quad_step > 0.0) {
            return Err(Error::InvalidArgument(format!("quadrature step must be positive, got {quad_step}")));
        }
        if horizon == 0.0 {
            return Ok(Self { offsets: vec![], on_reference: vec![], on_rate: vec![], quad_step, inputs });
        }
        let r_inv = r.clone().try_inverse().ok_or(Error::Singular("R"))?;
        let a_c = aug.a_bar.transpose() - k * &aug.b_bar * &r_inv * aug.b_bar.transpose();
        let lead = -(&r_inv * aug.b_bar.transpose());
        let kd = k * &aug.d_bar;
        let kd1 = k * &aug.d1_bar;

        let mut intervals = (horizon / quad_step).ceil() as usize;
        if intervals % 2 == 1 {
            intervals += 1;
        }
        let intervals = intervals.max(2);
        let step = horizon / intervals as f64;
        let mut offsets = Vec::with_capacity(intervals + 1);
        let mut on_reference = Vec::with_capacity(intervals + 1);
        let mut on_rate = Vec::with_capacity(intervals + 1);
        for j in 0..=intervals {
            let delta = j as f64 * step;
            let weight = step / 3.0
                * if j == 0 || j == intervals {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
            let forward = matrix_exponential(&a_c, delta)?;
            let backward = matrix_exponential(&a_c, -delta)?;
            offsets.push(delta);
            on_reference.push(&lead * forward * &kd * weight);
            on_rate.push(&lead * backward * &kd1 * weight);
        }
        Ok(Self { offsets, on_reference, on_rate, quad_step, inputs })
    }

    pub fn is_zero(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn eval(&self, reference: &SignalSpec, t: f64) -> Vector {
        let mut out = Vector::zeros(self.inputs);
        for ((delta, w_ref), w_rate) in self.offsets.iter().zip(&self.on_reference).zip(&self.on_rate) {
            let tau = t + delta;
            out += w_ref * reference.eval(tau) + w_rate * reference.rate(tau, self.quad_step);
        }
        out
    }
}

pub fn compute_feedforward(
    gains: &GainSet,
    aug: &AugmentedSystem,
    r: &Mat,
    reference: &SignalSpec,
    t: f64,
    horizon: f64,
    quad_step: f64,
) -> Result<Vector> {
    Ok(Feedforward::new(&gains.k, aug, r, horizon, quad_step)?.eval(reference, t))
}
