//! Tracking metrics, realized quadratic cost, inter-event statistics, CSV
//! trace export/import, and side-by-side run comparison.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{Mat, Vector};
use crate::sim::{Trace, TraceDims, TraceRecord};

/// Tracking indices of the external comparison controller.
pub const BASELINE_LABEL: &str = "comparison controller (external baseline)";
pub const BASELINE_RMSE: f64 = 0.3950;
pub const BASELINE_MSE: f64 = 0.1561;
pub const BASELINE_MAE: f64 = 0.1212;

/// Target indices for the proposed controller, used as a soft band.
pub const TARGET_RMSE: f64 = 0.1157;
pub const TARGET_MSE: f64 = 0.0134;
pub const TARGET_MAE: f64 = 0.0295;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window: [f64; 2],
    pub samples: usize,
    pub rmse: f64,
    pub mse: f64,
    pub mae: f64,
    pub max_abs_error: f64,
    #[serde(default)]
    pub realized_cost: Option<f64>,
    pub event_count: usize,
    pub inter_event: Option<IntervalStats>,
}

/// Error indices over the grid samples with `t ∈ [start, end]`, plus
/// inter-event statistics of the events falling in the same window.
pub fn compute_metrics(trace: &Trace, window: [f64; 2]) -> Result<MetricsReport> {
    let [start, end] = window;
    let errors: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.t >= start && r.t <= end)
        .flat_map(|r| r.eps.iter().copied())
        .collect();
    if errors.is_empty() || !(start <= end) {
        return Err(Error::EmptyWindow { start, end });
    }
    let n = errors.len() as f64;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let max_abs_error = errors.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));

    let events: Vec<f64> = trace.event_log.iter().copied().filter(|t| *t >= start && *t <= end).collect();
    Ok(MetricsReport {
        window,
        samples: errors.len(),
        rmse: mse.sqrt(),
        mse,
        mae,
        max_abs_error,
        realized_cost: None,
        event_count: events.len(),
        inter_event: interval_stats(&events),
    })
}

pub fn interval_stats(events: &[f64]) -> Option<IntervalStats> {
    let gaps: Vec<f64> = events.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return None;
    }
    Some(IntervalStats {
        min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
        max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// `½∫(zᵀQ_z z + uᵀRu) dt` by the trapezoidal rule over the trace, with
/// `z = (x, ε, x_a)`.
pub fn realized_cost(trace: &Trace, q_z: &Mat, r: &Mat) -> Result<f64> {
    let d = trace.dims;
    let nz = d.states + 2 * d.outputs;
    if q_z.shape() != (nz, nz) {
        return Err(dim_err("realized_cost Q_z", format!("{nz}x{nz}"), format!("{}x{}", q_z.nrows(), q_z.ncols())));
    }
    if r.shape() != (d.inputs, d.inputs) {
        return Err(dim_err("realized_cost R", format!("{0}x{0}", d.inputs), format!("{}x{}", r.nrows(), r.ncols())));
    }
    let integrand = |rec: &TraceRecord| {
        let mut z = Vector::zeros(nz);
        z.rows_mut(0, d.states).copy_from(&rec.x);
        z.rows_mut(d.states, d.outputs).copy_from(&rec.eps);
        z.rows_mut(d.states + d.outputs, d.outputs).copy_from(&rec.x_a);
        0.5 * (z.dot(&(q_z * &z)) + rec.u.dot(&(r * &rec.u)))
    };
    let values: Vec<(f64, f64)> = trace.records.iter().map(|rec| (rec.t, integrand(rec))).collect();
    Ok(values.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum())
}

const VECTOR_FIELDS: [&str; 13] =
    ["y", "y_r", "eps", "u", "u_f", "w", "w_hat", "w_tilde", "x", "x_hat", "x_held", "x_a", "v"];

fn field_dim(d: &TraceDims, name: &str) -> usize {
    match name {
        "y" | "y_r" | "eps" | "x_a" | "v" => d.outputs,
        "u" | "u_f" | "w_hat" | "w_tilde" => d.inputs,
        "w" => d.disturbances,
        _ => d.states,
    }
}

fn field<'a>(r: &'a TraceRecord, name: &str) -> &'a Vector {
    match name {
        "y" => &r.y,
        "y_r" => &r.y_r,
        "eps" => &r.eps,
        "u" => &r.u,
        "u_f" => &r.u_f,
        "w" => &r.w,
        "w_hat" => &r.w_hat,
        "w_tilde" => &r.w_tilde,
        "x" => &r.x,
        "x_hat" => &r.x_hat,
        "x_held" => &r.x_held,
        "x_a" => &r.x_a,
        _ => &r.v,
    }
}

pub fn csv_header(d: &TraceDims) -> String {
    let mut cols = vec!["t".to_string()];
    for name in VECTOR_FIELDS {
        cols.extend((0..field_dim(d, name)).map(|i| format!("{name}_{i}")));
    }
    cols.push("rho".into());
    cols.push("event".into());
    cols.join(",")
}

/// One header row, then one row per grid step. Values use the shortest
/// decimal form that parses back to the identical `f64`.
pub fn write_csv<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    writeln!(out, "{}", csv_header(&trace.dims))?;
    let mut line = String::new();
    for r in &trace.records {
        line.clear();
        write!(line, "{}", r.t).unwrap();
        for name in VECTOR_FIELDS {
            for v in field(r, name).iter() {
                write!(line, ",{v}").unwrap();
            }
        }
        write!(line, ",{},{}", r.rho, u8::from(r.event)).unwrap();
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_csv(trace: &Trace, path: &Path) -> Result<()> {
    write_csv(trace, BufWriter::new(File::create(path)?))
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Trace> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Io("empty CSV".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    let count = |name: &str| cols.iter().filter(|c| c.rsplit_once('_').is_some_and(|(p, i)| p == name && i.parse::<usize>().is_ok())).count();
    let dims = TraceDims {
        states: count("x"),
        inputs: count("u"),
        outputs: count("y"),
        disturbances: count("w"),
    };
    if csv_header(&dims) != header {
        return Err(Error::Io("unrecognized CSV header".into()));
    }

    let mut records = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::Io(format!("row {}: {e}", row + 2))))
            .collect::<Result<_>>()?;
        if values.len() != cols.len() {
            return Err(Error::Io(format!("row {} has {} fields, expected {}", row + 2, values.len(), cols.len())));
        }
        let mut at = 1;
        let mut take = |k: usize| {
            let v = Vector::from_row_slice(&values[at..at + k]);
            at += k;
            v
        };
        let mut vecs: Vec<Vector> = VECTOR_FIELDS.iter().map(|name| take(field_dim(&dims, name))).collect();
        let mut next = || vecs.remove(0);
        let rec = TraceRecord {
            t: values[0],
            y: next(),
            y_r: next(),
            eps: next(),
            u: next(),
            u_f: next(),
            w: next(),
            w_hat: next(),
            w_tilde: next(),
            x: next(),
            x_hat: next(),
            x_held: next(),
            x_a: next(),
            v: next(),
            rho: values[values.len() - 2],
            event: values[values.len() - 1] != 0.0,
        };
        records.push(rec);
    }
    let step = if records.len() >= 2 { records[1].t - records[0].t } else { 0.0 };
    let event_log = records.iter().filter(|r| r.event).map(|r| r.t).collect();
    Ok(Trace { dims, step, records, event_log })
}

pub fn import_csv(path: &Path) -> Result<Trace> {
    read_csv(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledReport {
    pub label: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRatios {
    pub numerator: String,
    pub denominator: String,
    pub rmse: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub realized_cost: Option<f64>,
    pub event_count: Option<f64>,
    pub min_inter_event: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub label: String,
    pub rmse: f64,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<LabeledReport>,
    pub ratios: Vec<PairRatios>,
    pub baseline: BaselineRow,
    pub target_proposed: BaselineRow,
}

/// `a / b`, with 0/0 read as 1 and x/0 as undefined.
fn ratio(a: f64, b: f64) -> Option<f64> {
    if a == b {
        Some(1.0)
    } else if b == 0.0 || !a.is_finite() || !b.is_finite() {
        None
    } else {
        Some(a / b)
    }
}

fn opt_ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => ratio(a, b),
        (None, None) => Some(1.0),
        _ => None,
    }
}

pub fn compare_runs(reports: Vec<LabeledReport>) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("comparison needs at least two runs".into()));
    }
    let mut ratios = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let (a, b) = (&reports[i].metrics, &reports[j].metrics);
            ratios.push(PairRatios {
                numerator: reports[i].label.clone(),
                denominator: reports[j].label.clone(),
                rmse: ratio(a.rmse, b.rmse),
                mse: ratio(a.mse, b.mse),
                mae: ratio(a.mae, b.mae),
                realized_cost: opt_ratio(a.realized_cost, b.realized_cost),
                event_count: ratio(a.event_count as f64, b.event_count as f64),
                min_inter_event: opt_ratio(a.inter_event.map(|s| s.min), b.inter_event.map(|s| s.min)),
            });
        }
    }
    Ok(Comparison {
        rows: reports,
        ratios,
        baseline: BaselineRow { label: BASELINE_LABEL.into(), rmse: BASELINE_RMSE, mse: BASELINE_MSE, mae: BASELINE_MAE },
        target_proposed: BaselineRow {
            label: "proposed controller (target)".into(),
            rmse: TARGET_RMSE,
            mse: TARGET_MSE,
            mae: TARGET_MAE,
        },
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<28} {:>14} {:>14} {:>14} {:>14} {:>14} {:>7} {:>10}",
            "run", "rmse", "mse", "mae", "max|eps|", "cost", "events", "min gap"
        )
        .unwrap();
        for row in &self.rows {
            let m = &row.metrics;
            writeln!(
                s,
                "{:<28} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14} {:>7} {:>10}",
                row.label,
                m.rmse,
                m.mse,
                m.mae,
                m.max_abs_error,
                fmt_opt(m.realized_cost),
                m.event_count,
                m.inter_event.map_or("-".into(), |i| format!("{:.4}", i.min)),
            )
            .unwrap();
        }
        for b in [&self.target_proposed, &self.baseline] {
            writeln!(s, "{:<28} {:>14.4} {:>14.4} {:>14.4}", b.label, b.rmse, b.mse, b.mae).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "ratios (numerator / denominator):").unwrap();
        for r in &self.ratios {
            writeln!(
                s,
                "  {} / {}: rmse {} mse {} mae {} cost {} events {} min-gap {}",
                r.numerator,
                r.denominator,
                fmt_opt(r.rmse),
                fmt_opt(r.mse),
                fmt_opt(r.mae),
                fmt_opt(r.realized_cost),
                fmt_opt(r.event_count),
                fmt_opt(r.min_inter_event),
            )
            .unwrap();
        }
        s
    }
}
