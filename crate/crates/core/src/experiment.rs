//! Scenario assembly from a configuration, partition selection, named run
//! variants, and the acceptance gates of the reproduction suite.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{compute_metrics, realized_cost, MetricsReport, TARGET_MAE, TARGET_MSE, TARGET_RMSE};
use crate::apetm::TriggerMode;
use crate::batch::map_batch;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::observer::error_spectrum;
use crate::plant::{LtiPlant, Signal};
use crate::sim::{build_analysis_matrices, rows_of, run_scenario, AnalysisBlocks, Scenario, Trace};
use crate::synthesis::{
    synthesize_gains, verify_closed_loop, AugmentedSystem, ClosedLoopReport, Feedforward, GainSet, Partition, Synthesis,
};

/// Reference gains for the two-mass example.
pub const TARGET_K_P: [f64; 3] = [-5.0118, 0.1947, 47.4];
pub const TARGET_K_C: f64 = 247.25;
/// Target ratio of minimum inter-event times, adaptive over static.
pub const TARGET_INTER_EVENT_RATIO: f64 = 20.0;
/// Target peak error after the step disturbance.
pub const TARGET_STEP_PEAK: f64 = 0.06;
/// Window holding the aperiodic disturbance burst.
pub const APERIODIC_WINDOW: [f64; 2] = [12.0, 18.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    EidOn,
    EidOff,
    Adaptive,
    Static,
    Continuous,
    StepDisturbance,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::EidOn, Variant::EidOff, Variant::Adaptive, Variant::Static, Variant::Continuous, Variant::StepDisturbance];

    pub fn name(self) -> &'static str {
        match self {
            Variant::EidOn => "eid_on",
            Variant::EidOff => "eid_off",
            Variant::Adaptive => "adaptive",
            Variant::Static => "static",
            Variant::Continuous => "continuous",
            Variant::StepDisturbance => "step_disturbance",
        }
    }

    /// The variant's configuration derived from `base`.
    pub fn apply(self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            Variant::EidOn => cfg.eid.enabled = true,
            Variant::EidOff => cfg.eid.enabled = false,
            Variant::Adaptive => cfg.trigger.mode = TriggerMode::Adaptive,
            Variant::Static => cfg.trigger.mode = TriggerMode::Static,
            Variant::Continuous => cfg.trigger.mode = TriggerMode::Continuous,
            Variant::StepDisturbance => {
                let step = cfg.signals.step_disturbance.unwrap_or(crate::config::StepDisturbance { time: 21.0, amplitude: 4.5 });
                let extra = Signal::Step { time: step.time, amplitude: step.amplitude, end: None };
                let mut spec = cfg.disturbance();
                spec.superpose(0, extra);
                cfg.signals.disturbance = spec.0;
            }
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`; expected one of eid_on, eid_off, adaptive, static, continuous, step_disturbance")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateScore {
    pub partition: Partition,
    /// `None` when the candidate's run diverged.
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionSelection {
    /// `None` when gains were supplied directly.
    pub chosen: Option<Partition>,
    pub automatic: bool,
    pub scores: Vec<CandidateScore>,
}

/// Plant, augmentation and Riccati solution for a configuration.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub config: ScenarioConfig,
    pub plant: LtiPlant,
    pub aug: AugmentedSystem,
    pub q_z: Mat,
    pub r: Mat,
    pub l: Mat,
    pub synthesis: Synthesis,
    pub certificate: ClosedLoopReport,
    pub synthesis_seconds: f64,
}

/// A synthesized configuration with the gains chosen for simulation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub base: Synthesized,
    pub gains: GainSet,
    pub selection: PartitionSelection,
}

impl std::ops::Deref for Prepared {
    type Target = Synthesized;

    fn deref(&self) -> &Synthesized {
        &self.base
    }
}

/// Loads the plant and solves the Riccati problem, without choosing a partition.
pub fn synthesize(cfg: &ScenarioConfig) -> Result<Synthesized> {
    let plant = cfg.plant()?;
    let l = cfg.observer_gain(&plant)?;
    let aug = cfg.augmented(&plant)?;
    let (q_z, r) = (cfg.q_z()?, cfg.r()?);
    let start = Instant::now();
    let synthesis = synthesize_gains(&aug, &q_z, &r, &l)?;
    let certificate = verify_closed_loop(&aug, &synthesis.k, &q_z, &r)?;
    let synthesis_seconds = start.elapsed().as_secs_f64();
    Ok(Synthesized { config: cfg.clone(), plant, aug, q_z, r, l, synthesis, certificate, synthesis_seconds })
}

/// Runtime scenario for `cfg` with the given gains.
pub fn build_scenario(cfg: &ScenarioConfig, plant: &LtiPlant, aug: &AugmentedSystem, r: &Mat, gains: &GainSet) -> Result<Scenario> {
    let feedforward = if cfg.preview.t_r > 0.0 {
        Some(Feedforward::new(&gains.k, aug, r, cfg.preview.t_r, cfg.preview.quad_step)?)
    } else {
        None
    };
    let scenario = Scenario {
        plant: plant.clone(),
        gains: gains.clone(),
        filter: cfg.filter()?,
        eid_enabled: cfg.eid.enabled,
        w_a: cfg.mrc.w_a,
        period: cfg.mrc.period,
        trigger: cfg.trigger_params(plant.states())?,
        reference: cfg.reference(),
        disturbance: cfg.disturbance(),
        horizon: cfg.sim.horizon,
        h: cfg.sim.h,
        substeps: cfg.sim.substeps,
        feedforward,
        x0: cfg.x0(plant.states())?,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    let base = synthesize(cfg)?;
    let Synthesized { plant, aug, r, l, synthesis, .. } = &base;

    let (gains, selection) = if let Some((k_p, k_c)) = cfg.fixed_gains()? {
        let gains = GainSet::fixed(k_p, k_c, synthesis.k.clone(), l.clone());
        (gains, PartitionSelection { chosen: None, automatic: false, scores: vec![] })
    } else if let Some(p) = cfg.synthesis.partition.fixed() {
        (synthesis.gains(p).clone(), PartitionSelection { chosen: Some(p), automatic: false, scores: vec![] })
    } else {
        let window = cfg.window();
        let scores = map_batch(&Partition::ALL, |&p| -> Result<CandidateScore> {
            let scenario = build_scenario(cfg, plant, aug, r, synthesis.gains(p))?;
            let rmse = match run_scenario(&scenario) {
                Ok(trace) => Some(compute_metrics(&trace, window)?.rmse),
                Err(Error::Diverged { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(CandidateScore { partition: p, rmse })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let best = scores
            .iter()
            .filter_map(|s| s.rmse.map(|r| (s.partition, r)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, _)| p)
            .ok_or(Error::Diverged { t: f64::NAN })?;
        (synthesis.gains(best).clone(), PartitionSelection { chosen: Some(best), automatic: true, scores })
    };

    Ok(Prepared { base, gains, selection })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub label: String,
    pub config: ScenarioConfig,
    pub trace: Trace,
    pub metrics: MetricsReport,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GainReport {
    pub partition: Option<Partition>,
    pub k_p: Vec<Vec<f64>>,
    pub k_c: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
}

impl GainReport {
    pub fn of(g: &GainSet) -> Self {
        Self { partition: g.partition, k_p: rows_of(&g.k_p), k_c: rows_of(&g.k_c), l: rows_of(&g.l) }
    }
}

/// JSON payload written next to each trace.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub label: String,
    pub eid_enabled: bool,
    pub trigger_mode: TriggerMode,
    pub horizon: f64,
    pub h: f64,
    pub substeps: usize,
    pub gains: GainReport,
    pub metrics: MetricsReport,
    pub aperiodic_window: Option<MetricsReport>,
    pub runtime_seconds: f64,
}

impl RunOutput {
    pub fn report(&self, gains: &GainSet) -> RunReport {
        RunReport {
            label: self.label.clone(),
            eid_enabled: self.config.eid.enabled,
            trigger_mode: self.config.trigger.mode,
            horizon: self.config.sim.horizon,
            h: self.config.sim.h,
            substeps: self.config.sim.substeps,
            gains: GainReport::of(gains),
            metrics: self.metrics.clone(),
            aperiodic_window: compute_metrics(&self.trace, APERIODIC_WINDOW).ok(),
            runtime_seconds: self.seconds,
        }
    }
}

impl Prepared {
    /// Runs `cfg` (a variant of the prepared configuration) with the prepared gains.
    pub fn run_config(&self, label: &str, cfg: &ScenarioConfig) -> Result<RunOutput> {
        let scenario = build_scenario(cfg, &self.plant, &self.aug, &self.r, &self.gains)?;
        let start = Instant::now();
        let trace = run_scenario(&scenario)?;
        let seconds = start.elapsed().as_secs_f64();
        let mut metrics = compute_metrics(&trace, cfg.window())?;
        metrics.realized_cost = Some(realized_cost(&trace, &self.q_z, &self.r)?);
        Ok(RunOutput { label: label.to_string(), config: cfg.clone(), trace, metrics, seconds })
    }

    pub fn run(&self) -> Result<RunOutput> {
        self.run_config("run", &self.config)
    }

    pub fn run_variant(&self, variant: Variant) -> Result<RunOutput> {
        self.run_config(variant.name(), &variant.apply(&self.config))
    }

    pub fn run_variants(&self, variants: &[Variant]) -> Vec<Result<RunOutput>> {
        map_batch(variants, |&v| self.run_variant(v))
    }
}

impl Synthesized {
    pub fn synth_report(&self) -> Result<SynthReport> {
        let candidates = self
            .synthesis
            .candidates
            .iter()
            .map(|g| {
                let scenario = build_scenario(&self.config, &self.plant, &self.aug, &self.r, g)?;
                Ok(CandidateReport {
                    gains: GainReport::of(g),
                    deviation: GainDeviation::of(g),
                    analysis: build_analysis_matrices(&scenario)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SynthReport {
            residual: self.certificate.residual,
            iterations: self.synthesis.iterations,
            hurwitz: self.certificate.hurwitz,
            symmetric: self.certificate.symmetric,
            min_eigenvalue_k: self.certificate.min_eigenvalue_k,
            certified: self.certificate.certified(),
            closed_loop_spectrum: self.certificate.spectrum.clone(),
            observer_spectrum: error_spectrum(&self.plant, &self.l)?.iter().map(|z| (z.re, z.im)).collect(),
            k: rows_of(&self.synthesis.k),
            candidates,
            seconds: self.synthesis_seconds,
        })
    }
}

/// Relative deviation of synthesized gains from the printed ones.
#[derive(Debug, Clone, Serialize)]
pub struct GainDeviation {
    pub k_p: Vec<f64>,
    pub k_c: f64,
}

impl GainDeviation {
    pub fn of(g: &GainSet) -> Option<Self> {
        if g.k_p.shape() != (1, 3) || g.k_c.shape() != (1, 1) {
            return None;
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        Some(Self {
            k_p: (0..3).map(|i| rel(g.k_p[(0, i)], TARGET_K_P[i])).collect(),
            k_c: rel(g.k_c[(0, 0)], TARGET_K_C),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub gains: GainReport,
    pub deviation: Option<GainDeviation>,
    pub analysis: AnalysisBlocks,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub residual: f64,
    pub iterations: usize,
    pub hurwitz: bool,
    pub symmetric: bool,
    pub min_eigenvalue_k: f64,
    pub certified: bool,
    pub closed_loop_spectrum: Vec<(f64, f64)>,
    pub observer_spectrum: Vec<(f64, f64)>,
    pub k: Vec<Vec<f64>>,
    pub candidates: Vec<CandidateReport>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub id: u8,
    pub name: String,
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

impl Gate {
    fn new(id: u8, name: &str, hard: bool, passed: bool, detail: String) -> Self {
        Self { id, name: name.to_string(), hard, passed, detail }
    }
}

/// Runs of the reproduction suite.
#[derive(Debug, Clone)]
pub struct ReproRuns {
    pub proposed: RunOutput,
    pub no_eid: RunOutput,
    pub static_petm: RunOutput,
    pub step: RunOutput,
    /// Adaptive and static runs with `κ = 0`.
    pub frozen_adaptive: RunOutput,
    pub frozen_static: RunOutput,
}

impl ReproRuns {
    /// The four artifact-producing runs, in output order.
    pub fn artifacts(&self) -> [&RunOutput; 4] {
        [&self.proposed, &self.no_eid, &self.static_petm, &self.step]
    }
}

pub fn run_repro(prepared: &Prepared) -> Result<ReproRuns> {
    let base = Variant::Adaptive.apply(&Variant::EidOn.apply(&prepared.config));
    let mut frozen = base.clone();
    frozen.trigger.kappa = 0.0;
    let jobs: Vec<(&str, ScenarioConfig)> = vec![
        ("proposed", base.clone()),
        ("no_eid", Variant::EidOff.apply(&base)),
        ("static_petm", Variant::Static.apply(&base)),
        ("step_disturbance", Variant::StepDisturbance.apply(&base)),
        ("frozen_adaptive", frozen.clone()),
        ("frozen_static", Variant::Static.apply(&frozen)),
    ];
    let mut runs = map_batch(&jobs, |(label, cfg)| prepared.run_config(label, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || runs.next().unwrap();
    Ok(ReproRuns {
        proposed: next(),
        no_eid: next(),
        static_petm: next(),
        step: next(),
        frozen_adaptive: next(),
        frozen_static: next(),
    })
}

fn max_abs_after(trace: &Trace, t0: f64) -> f64 {
    trace.records.iter().filter(|r| r.t > t0).map(|r| r.eps.amax()).fold(0.0, f64::max)
}

/// First time after which `|ε| ≤ band` holds for the rest of the run, searched from `t0`.
pub fn settle_time(trace: &Trace, t0: f64, band: f64) -> Option<f64> {
    let after: Vec<_> = trace.records.iter().filter(|r| r.t >= t0).collect();
    let last_out = after.iter().rposition(|r| r.eps.amax() > band);
    match last_out {
        None => after.first().map(|r| r.t),
        Some(i) => after.get(i + 1).map(|r| r.t),
    }
}

/// Checks on the trigger trace: gaps, threshold bounds, and zero error form at transmissions.
pub fn trigger_invariants(run: &RunOutput) -> (bool, String) {
    let t = &run.config.trigger;
    let log = &run.trace.event_log;
    let gaps_ok = log.windows(2).all(|w| w[1] - w[0] >= t.period);
    let rho_ok = run.trace.records.iter().all(|r| r.rho >= t.rho_lo && r.rho <= t.rho_hi);
    let reset_ok = run.trace.records.iter().filter(|r| r.event).all(|r| r.x_held == r.x_hat);
    let min_gap = log.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    (
        gaps_ok && rho_ok && reset_ok,
        format!(
            "{} events, min gap {min_gap} s (T1 = {}), rho in bounds: {rho_ok}, zero error at transmissions: {reset_ok}",
            log.len(),
            t.period
        ),
    )
}

pub fn frozen_equivalent(a: &RunOutput, b: &RunOutput) -> bool {
    a.trace.event_log == b.trace.event_log
        && a.trace.records.len() == b.trace.records.len()
        && a.trace.records.iter().zip(&b.trace.records).all(|(x, y)| x.event == y.event && x.x_held == y.x_held)
}

fn dominates(a: &MetricsReport, b: &MetricsReport) -> bool {
    a.rmse < b.rmse && a.mse < b.mse && a.mae < b.mae
}

fn within_band(value: f64, target: f64) -> bool {
    value >= 0.5 * target && value <= 2.0 * target
}

/// Evaluates acceptance criteria 1 through 6 on the reproduction runs.
pub fn evaluate_gates(prepared: &Prepared, runs: &ReproRuns) -> Result<Vec<Gate>> {
    let mut gates = Vec::new();
    let cert = &prepared.certificate;
    gates.push(Gate::new(
        1,
        "synthesis certificate",
        true,
        cert.certified() && prepared.synthesis_seconds < 1.0,
        format!(
            "residual {:e}, hurwitz {}, symmetric {}, min eig(K) {:e}, {:.3} s",
            cert.residual, cert.hurwitz, cert.symmetric, cert.min_eigenvalue_k, prepared.synthesis_seconds
        ),
    ));
    let deviation = GainDeviation::of(&prepared.gains);
    gates.push(Gate::new(
        1,
        "target gains reproduced (soft)",
        false,
        deviation.as_ref().is_some_and(|d| d.k_c < 0.05 && d.k_p.iter().all(|x| *x < 0.05)),
        format!(
            "k_p = {:?}, k_c = {:?}; target k_p = {TARGET_K_P:?}, k_c = {TARGET_K_C}; relative deviation {:?}",
            prepared.gains.k_p.iter().collect::<Vec<_>>(),
            prepared.gains.k_c.iter().collect::<Vec<_>>(),
            deviation
        ),
    ));

    let on_full = &runs.proposed.metrics;
    let off_full = &runs.no_eid.metrics;
    let on_win = compute_metrics(&runs.proposed.trace, APERIODIC_WINDOW)?;
    let off_win = compute_metrics(&runs.no_eid.trace, APERIODIC_WINDOW)?;
    let slowest = runs.artifacts().iter().map(|r| r.seconds).fold(0.0, f64::max);
    gates.push(Gate::new(
        2,
        "EID-on dominates EID-off",
        true,
        dominates(on_full, off_full) && dominates(&on_win, &off_win) && slowest < 30.0,
        format!(
            "full rmse {:.6e} vs {:.6e}, mse {:.6e} vs {:.6e}, mae {:.6e} vs {:.6e}; [12,18] rmse {:.6e} vs {:.6e}, mse {:.6e} vs {:.6e}, mae {:.6e} vs {:.6e}; slowest run {slowest:.2} s",
            on_full.rmse, off_full.rmse, on_full.mse, off_full.mse, on_full.mae, off_full.mae,
            on_win.rmse, off_win.rmse, on_win.mse, off_win.mse, on_win.mae, off_win.mae
        ),
    ));
    gates.push(Gate::new(
        2,
        "EID-on metrics within [0.5x, 2x] of target (soft)",
        false,
        within_band(on_full.rmse, TARGET_RMSE) && within_band(on_full.mse, TARGET_MSE) && within_band(on_full.mae, TARGET_MAE),
        format!(
            "rmse {:.4e} / {TARGET_RMSE}, mse {:.4e} / {TARGET_MSE}, mae {:.4e} / {TARGET_MAE}",
            on_full.rmse, on_full.mse, on_full.mae
        ),
    ));

    let contrast = off_win.max_abs_error / on_win.max_abs_error;
    gates.push(Gate::new(
        3,
        "aperiodic contrast >= 2",
        true,
        off_win.max_abs_error >= 2.0 * on_win.max_abs_error,
        format!(
            "max|eps| on [12,18]: EID-off {:.6e}, EID-on {:.6e}, ratio {contrast:.4}",
            off_win.max_abs_error, on_win.max_abs_error
        ),
    ));

    let step = runs.step.config.signals.step_disturbance.map_or(21.0, |s| s.time);
    let peak = max_abs_after(&runs.step.trace, step);
    let settle = settle_time(&runs.step.trace, step, 0.1);
    let period = runs.step.config.mrc.period;
    gates.push(Gate::new(
        4,
        "step disturbance robustness",
        true,
        peak < 0.2 && settle.is_some_and(|t| t - step <= 2.0 * period),
        format!(
            "max|eps| after t = {step}: {peak:.6e} (target {TARGET_STEP_PEAK}); inside +-0.1 from t = {}",
            settle.map_or("never".to_string(), |t| format!("{t}"))
        ),
    ));

    let mut ok = true;
    let mut details = Vec::new();
    for run in [&runs.proposed, &runs.static_petm, &runs.no_eid, &runs.step] {
        let (pass, detail) = trigger_invariants(run);
        ok &= pass;
        details.push(format!("{}: {detail}", run.label));
    }
    let frozen = frozen_equivalent(&runs.frozen_adaptive, &runs.frozen_static);
    details.push(format!("kappa = 0 adaptive == static: {frozen}"));
    gates.push(Gate::new(5, "trigger invariants", true, ok && frozen, details.join("; ")));

    let adaptive = &runs.proposed.metrics;
    let fixed = &runs.static_petm.metrics;
    let ratio = match (adaptive.inter_event, fixed.inter_event) {
        (Some(a), Some(s)) if s.min > 0.0 => Some(a.min / s.min),
        _ => None,
    };
    gates.push(Gate::new(
        6,
        "adaptive events <= static events (soft)",
        false,
        adaptive.event_count <= fixed.event_count,
        format!(
            "events adaptive {} vs static {}; min-gap ratio {} (target {TARGET_INTER_EVENT_RATIO}x)",
            adaptive.event_count,
            fixed.event_count,
            ratio.map_or("n/a".into(), |r| format!("{r:.4}"))
        ),
    ));
    Ok(gates)
}

pub fn hard_gates_pass(gates: &[Gate]) -> bool {
    gates.iter().filter(|g| g.hard).all(|g| g.passed)
}
