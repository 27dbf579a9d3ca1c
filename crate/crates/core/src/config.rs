//! TOML scenario documents: parsing, load-time validation, `key=value`
//! overrides, and conversion into runtime objects.

use serde::{Deserialize, Serialize};

use crate::apetm::{TriggerMode, TriggerParams};
use crate::eid::ShapingFilter;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{is_positive_definite, matrix_from_rows, Complex, Mat, Vector};
use crate::observer::{place_observer_poles, ObserverGain};
use crate::plant::{LtiPlant, Signal, SignalSpec};
use crate::sim::grid_count;
use crate::synthesis::{build_augmented, AugmentedSystem, Partition};

const NOMINAL: &str = include_str!("../configs/nominal.toml");

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    /// Defaults to `B` (matched input disturbance).
    #[serde(rename = "B_omega", default, skip_serializing_if = "Option::is_none")]
    pub b_omega: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrcSection {
    pub w_a: f64,
    #[serde(rename = "T")]
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EidSection {
    pub w_f: f64,
    pub enabled: bool,
    /// Explicit filter coefficients; overrides `w_f` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<ShapingFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Rows>,
    /// `[re, im]` pairs for single-output pole placement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSection {
    #[serde(rename = "T1")]
    pub period: f64,
    /// Identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi1: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi2: Option<Rows>,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub rho0: f64,
    pub kappa: f64,
    pub mode: TriggerMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionChoice {
    /// Run both candidates and keep the one with the lower full-window RMSE.
    Auto,
    LastColumn,
    ErrorColumn,
}

impl PartitionChoice {
    pub fn fixed(self) -> Option<Partition> {
        match self {
            PartitionChoice::Auto => None,
            PartitionChoice::LastColumn => Some(Partition::LastColumn),
            PartitionChoice::ErrorColumn => Some(Partition::ErrorColumn),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    #[serde(rename = "Q_z")]
    pub q_z: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    /// Cutoff in the augmented model; defaults to `mrc.w_a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    #[serde(default = "default_partition")]
    pub partition: PartitionChoice,
    /// Gains used in place of the synthesized ones (both or neither).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_p: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_c: Option<Rows>,
}

fn default_partition() -> PartitionChoice {
    PartitionChoice::Auto
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDisturbance {
    pub time: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsSection {
    pub reference: Vec<Signal>,
    pub disturbance: Vec<Signal>,
    /// Extra input-channel step used by the robustness variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_disturbance: Option<StepDisturbance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    pub h: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Metrics window; the full run when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

fn default_substeps() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewSection {
    pub t_r: f64,
    pub quad_step: f64,
}

impl Default for PreviewSection {
    fn default() -> Self {
        Self { t_r: 0.0, quad_step: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantSection,
    pub mrc: MrcSection,
    pub eid: EidSection,
    pub observer: ObserverSection,
    pub trigger: TriggerSection,
    pub synthesis: SynthesisSection,
    pub signals: SignalsSection,
    pub sim: SimSection,
    #[serde(default)]
    pub preview: PreviewSection,
}

fn mat(name: &str, rows: &Rows) -> Result<Mat> {
    matrix_from_rows(rows).map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn parse_scalar(raw: &str) -> toml::Value {
    match raw {
        "on" => return toml::Value::Boolean(true),
        "off" => return toml::Value::Boolean(false),
        _ => {}
    }
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Short aliases accepted in place of a full dotted path.
fn expand_alias(key: &str) -> &str {
    match key {
        "eid" => "eid.enabled",
        "mode" => "trigger.mode",
        "horizon" => "sim.horizon",
        "h" => "sim.h",
        "substeps" => "sim.substeps",
        "partition" => "synthesis.partition",
        "t_r" => "preview.t_r",
        "kappa" => "trigger.kappa",
        "w_a" => "mrc.w_a",
        other => other,
    }
}

/// Sets `path = value` inside a TOML tree, creating tables on the way.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = expand_alias(key.trim()).split('.').collect();
    let value = parse_scalar(raw.trim());
    let (last, parents) = path.split_last().unwrap();
    let mut table = doc;
    for part in parents {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl ScenarioConfig {
    pub fn nominal() -> Self {
        Self::from_toml_str(NOMINAL).expect("bundled configuration is valid")
    }

    pub fn bundled_text() -> &'static str {
        NOMINAL
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[] as &[&str])
    }

    /// Parses `text`, applies `key=value` overrides in order (later wins), then validates.
    pub fn with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o.as_ref())?;
        }
        let cfg: Self = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[impl AsRef<str>]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies further overrides to an already validated configuration.
    pub fn overridden<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        Self::with_overrides(&self.to_toml_string()?, overrides)
    }

    pub fn plant(&self) -> Result<LtiPlant> {
        let a = mat("plant.A", &self.plant.a)?;
        let b = mat("plant.B", &self.plant.b)?;
        let c = mat("plant.C", &self.plant.c)?;
        let b_w = match &self.plant.b_omega {
            Some(rows) => mat("plant.B_omega", rows)?,
            None => b.clone(),
        };
        LtiPlant::new(a, b, c, b_w)
    }

    pub fn observer_gain(&self, plant: &LtiPlant) -> Result<Mat> {
        let l = match (&self.observer.l, &self.observer.poles) {
            (Some(rows), None) => mat("observer.L", rows)?,
            (None, Some(poles)) => {
                let poles: Vec<Complex> = poles.iter().map(|[re, im]| Complex::new(*re, *im)).collect();
                place_observer_poles(plant, &poles)?
            }
            _ => return Err(Error::Config("observer: give exactly one of L or poles".into())),
        };
        Ok(ObserverGain::new(plant, l)?.matrix().clone())
    }

    pub fn filter(&self) -> Result<ShapingFilter> {
        match self.eid.filter {
            Some(f) => {
                f.validate()?;
                Ok(f)
            }
            None => ShapingFilter::low_pass(self.eid.w_f),
        }
    }

    pub fn omega_c(&self) -> f64 {
        self.synthesis.omega_c.unwrap_or(self.mrc.w_a)
    }

    pub fn augmented(&self, plant: &LtiPlant) -> Result<AugmentedSystem> {
        build_augmented(plant, self.omega_c())
    }

    pub fn q_z(&self) -> Result<Mat> {
        mat("synthesis.Q_z", &self.synthesis.q_z)
    }

    pub fn r(&self) -> Result<Mat> {
        mat("synthesis.R", &self.synthesis.r)
    }

    pub fn trigger_params(&self, states: usize) -> Result<TriggerParams> {
        let weight = |name: &str, rows: &Option<Rows>| match rows {
            Some(r) => mat(name, r),
            None => Ok(Mat::identity(states, states)),
        };
        let t = &self.trigger;
        let params = TriggerParams {
            period: t.period,
            rho_lo: t.rho_lo,
            rho_hi: t.rho_hi,
            rho0: t.rho0,
            kappa: t.kappa,
            psi1: weight("trigger.psi1", &t.psi1)?,
            psi2: weight("trigger.psi2", &t.psi2)?,
            mode: t.mode,
        };
        params.validate(states)?;
        Ok(params)
    }

    pub fn reference(&self) -> SignalSpec {
        SignalSpec(self.signals.reference.clone())
    }

    pub fn disturbance(&self) -> SignalSpec {
        SignalSpec(self.signals.disturbance.clone())
    }

    pub fn x0(&self, states: usize) -> Result<Vector> {
        match &self.sim.x0 {
            Some(v) if v.len() != states => Err(dim_err("sim.x0", states, v.len())),
            Some(v) => Ok(Vector::from_column_slice(v)),
            None => Ok(Vector::zeros(states)),
        }
    }

    pub fn window(&self) -> [f64; 2] {
        self.sim.window.unwrap_or([0.0, self.sim.horizon])
    }

    /// Directly supplied `(k_p, k_c)`, if any.
    pub fn fixed_gains(&self) -> Result<Option<(Mat, Mat)>> {
        match (&self.synthesis.k_p, &self.synthesis.k_c) {
            (Some(kp), Some(kc)) => Ok(Some((mat("synthesis.k_p", kp)?, mat("synthesis.k_c", kc)?))),
            (None, None) => Ok(None),
            _ => Err(Error::Config("synthesis: give both k_p and k_c, or neither".into())),
        }
    }

    /// Every check that does not need a Riccati solve.
    pub fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        let (n, m, p) = (plant.states(), plant.inputs(), plant.outputs());
        self.observer_gain(&plant)?;
        self.filter()?;
        self.trigger_params(n)?;

        let q_z = self.q_z()?;
        let nz = n + 2 * p;
        if q_z.shape() != (nz, nz) {
            return Err(dim_err("synthesis.Q_z", format!("{nz}x{nz}"), format!("{}x{}", q_z.nrows(), q_z.ncols())));
        }
        if !is_positive_definite(&q_z) {
            return Err(Error::Config("synthesis.Q_z must be symmetric positive definite".into()));
        }
        let r = self.r()?;
        if r.shape() != (m, m) {
            return Err(dim_err("synthesis.R", format!("{m}x{m}"), format!("{}x{}", r.nrows(), r.ncols())));
        }
        if let Some((k_p, k_c)) = self.fixed_gains()? {
            if k_p.shape() != (m, n) {
                return Err(dim_err("synthesis.k_p", format!("{m}x{n}"), format!("{}x{}", k_p.nrows(), k_p.ncols())));
            }
            if k_c.shape() != (m, p) {
                return Err(dim_err("synthesis.k_c", format!("{m}x{p}"), format!("{}x{}", k_c.nrows(), k_c.ncols())));
            }
        }
        if !(self.omega_c() > 0.0) {
            return Err(Error::Config("synthesis.omega_c must be positive".into()));
        }
        if !(self.mrc.w_a > 0.0 && self.mrc.period > 0.0) {
            return Err(Error::Config("mrc: w_a and T must be positive".into()));
        }

        let reference = self.reference();
        let disturbance = self.disturbance();
        reference.validate()?;
        disturbance.validate()?;
        if reference.channels() != p {
            return Err(dim_err("signals.reference channels", p, reference.channels()));
        }
        if disturbance.channels() != plant.disturbances() {
            return Err(dim_err("signals.disturbance channels", plant.disturbances(), disturbance.channels()));
        }
        if let Some(step) = self.signals.step_disturbance {
            if !(step.time >= 0.0 && step.amplitude.is_finite()) {
                return Err(Error::Config("signals.step_disturbance: time must be >= 0".into()));
            }
        }
        self.x0(n)?;

        let s = &self.sim;
        if !(s.h > 0.0 && s.h.is_finite()) || s.substeps == 0 {
            return Err(Error::Config("sim: h must be positive and substeps at least 1".into()));
        }
        grid_count(s.horizon, s.h, "sim.horizon / sim.h")?;
        grid_count(self.mrc.period, s.h, "mrc.T / sim.h")?;
        grid_count(self.trigger.period, s.h, "trigger.T1 / sim.h")?;
        if let Some([a, b]) = s.window {
            if !(a <= b) {
                return Err(Error::Config(format!("sim.window [{a}, {b}] is empty")));
            }
        }
        if !(self.preview.t_r >= 0.0 && self.preview.quad_step > 0.0) {
            return Err(Error::Config("preview: t_r must be >= 0 and quad_step > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_loads() {
        let cfg = ScenarioConfig::nominal();
        let plant = cfg.plant().unwrap();
        assert_eq!((plant.states(), plant.inputs(), plant.outputs()), (3, 1, 1));
        assert_eq!(cfg.omega_c(), 100.0);
        assert_eq!(cfg.window(), [0.0, 25.0]);
        assert!((cfg.reference().eval(0.5)[0] - 0.5).abs() < 1e-12);
        assert!((cfg.disturbance().eval(6.125)[0] - 3.630_986_8).abs() < 1e-5);
        assert_eq!(cfg.disturbance().eval(10.0)[0], 0.0);
    }

    #[test]
    fn round_trip_is_identical() {
        let cfg = ScenarioConfig::nominal();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_aliases() {
        let base = ScenarioConfig::bundled_text();
        let cfg = ScenarioConfig::with_overrides(base, &["eid=off", "mode=static", "horizon=0.001", "trigger.kappa=0"]).unwrap();
        assert!(!cfg.eid.enabled);
        assert_eq!(cfg.trigger.mode, TriggerMode::Static);
        assert_eq!(cfg.sim.horizon, 0.001);
        assert_eq!(cfg.trigger.kappa, 0.0);
        let later = ScenarioConfig::with_overrides(base, &["h=0.0005", "h=0.002"]).unwrap();
        assert_eq!(later.sim.h, 0.002);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = ScenarioConfig::bundled_text().replace("w_a = 100.0", "w_a = 100.0\nwa = 1.0");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(Error::Config(_))));
        assert!(ScenarioConfig::with_overrides(ScenarioConfig::bundled_text(), &["sim.hh=1"]).is_err());
    }

    #[test]
    fn q_z_not_pd_names_matrix() {
        let err = ScenarioConfig::with_overrides(
            ScenarioConfig::bundled_text(),
            &["synthesis.Q_z=[[1,0,0,0,0],[0,1,0,0,0],[0,0,1,0,0],[0,0,0,-1,0],[0,0,0,0,1]]"],
        )
        .unwrap_err();
        assert!(err.to_string().contains("Q_z"), "{err}");
    }

    #[test]
    fn grid_divisibility_enforced() {
        let err = ScenarioConfig::with_overrides(ScenarioConfig::bundled_text(), &["h=0.0003"]).unwrap_err();
        assert!(err.to_string().contains("multiple"), "{err}");
        assert!(ScenarioConfig::with_overrides(ScenarioConfig::bundled_text(), &["trigger.T1=0.0015", "h=0.001"]).is_err());
    }

    #[test]
    fn r_zero_passes_load() {
        assert!(ScenarioConfig::with_overrides(ScenarioConfig::bundled_text(), &["synthesis.R=[[0.0]]"]).is_ok());
    }

    #[test]
    fn unstable_observer_rejected() {
        assert!(ScenarioConfig::with_overrides(ScenarioConfig::bundled_text(), &["observer.L=[[-1000],[0],[0]]"]).is_err());
    }
}
