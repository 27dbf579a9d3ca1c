//! `etrc`: synthesis, simulation runs, comparisons and the reproduction suite
//! for the event-triggered repetitive controller.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use etrc_core::analysis::{compare_runs, export_csv, LabeledReport};
use etrc_core::config::ScenarioConfig;
use etrc_core::experiment::{evaluate_gates, hard_gates_pass, prepare, run_repro, synthesize, RunOutput, SynthReport, Variant};
use etrc_core::synthesis::GainSet;

/// Name that selects the bundled configuration instead of a file.
const BUNDLED: &str = "nominal";

#[derive(Parser)]
#[command(name = "etrc", version, about = "Event-triggered repetitive control with disturbance estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario file, or `nominal` for the bundled one.
    config: String,
    /// Overrides such as `eid=off`, `mode=static`, `sim.horizon=5`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory root.
    #[arg(long, env = "ETRC_OUT_DIR", default_value = "etrc-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Riccati problem and print the gains and certificate.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Simulate one scenario and write `trace.csv` and `metrics.json`.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate several variants and compare their metrics.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated variants: eid_on, eid_off, adaptive, static, continuous, step_disturbance.
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the full experiment suite and check the acceptance gates.
    Repro {
        /// Scenario file; the bundled configuration when omitted.
        #[arg(long)]
        config: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn load(config: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    for o in overrides {
        if !o.contains('=') {
            bail!("override `{o}` is not of the form key=value");
        }
    }
    let cfg = if config == BUNDLED && !Path::new(config).exists() {
        ScenarioConfig::with_overrides(ScenarioConfig::bundled_text(), overrides)
    } else {
        ScenarioConfig::load(Path::new(config), overrides)
    };
    cfg.with_context(|| format!("loading configuration `{config}`"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn fmt_rows(rows: &[Vec<f64>]) -> String {
    let inner: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|v| format!("{v:.10e}")).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", inner.join(", "))
}

fn fmt_spectrum(s: &[(f64, f64)]) -> String {
    s.iter().map(|(re, im)| format!("{re:.6e}{im:+.6e}i")).collect::<Vec<_>>().join(", ")
}

fn print_synth(report: &SynthReport) {
    println!("certified: {}", report.certified);
    println!("residual: {:e} ({} Newton iterations, {:.4} s)", report.residual, report.iterations, report.seconds);
    println!("hurwitz closed loop: {}", report.hurwitz);
    println!("K symmetric: {}, min eigenvalue {:e}", report.symmetric, report.min_eigenvalue_k);
    println!("K = {}", fmt_rows(&report.k));
    println!("closed-loop spectrum: {}", fmt_spectrum(&report.closed_loop_spectrum));
    println!("observer error spectrum: {}", fmt_spectrum(&report.observer_spectrum));
    for c in &report.candidates {
        let name = c.gains.partition.map_or("fixed".to_string(), |p| format!("{p:?}"));
        println!();
        println!("partition {name}:");
        println!("  k_p = {}", fmt_rows(&c.gains.k_p));
        println!("  k_c = {}", fmt_rows(&c.gains.k_c));
        if let Some(d) = &c.deviation {
            println!("  relative deviation from target gains: k_p {:?}, k_c {:.4}", d.k_p, d.k_c);
        }
        for s in &c.analysis.stability {
            println!("  {}: hurwitz {}, spectrum {}", s.name, s.hurwitz, fmt_spectrum(&s.spectrum));
        }
    }
}

fn cmd_synth(cfg: &ScenarioConfig, json: bool) -> Result<ExitCode> {
    let report = synthesize(cfg)?.synth_report()?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_synth(&report);
    }
    Ok(if report.certified { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn write_run(dir: &Path, stem: &str, run: &RunOutput, gains: &GainSet) -> Result<()> {
    export_csv(&run.trace, &dir.join(format!("{stem}.csv"))).with_context(|| format!("writing {stem}.csv"))?;
    write_json(&dir.join(format!("{stem}.json")), &run.report(gains))
}

fn print_metrics(run: &RunOutput) {
    let m = &run.metrics;
    println!(
        "{}: rmse {:.6e}, mse {:.6e}, mae {:.6e}, max|eps| {:.6e}, events {}, {:.2} s",
        run.label, m.rmse, m.mse, m.mae, m.max_abs_error, m.event_count, run.seconds
    );
}

fn cmd_run(cfg: &ScenarioConfig, out: &Path) -> Result<ExitCode> {
    let prepared = prepare(cfg)?;
    let run = prepared.run()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    export_csv(&run.trace, &out.join("trace.csv")).context("writing trace.csv")?;
    write_json(&out.join("metrics.json"), &run.report(&prepared.gains))?;
    print_metrics(&run);
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(cfg: &ScenarioConfig, modes: &[String], out: &Path) -> Result<ExitCode> {
    let variants = modes.iter().map(|m| m.parse::<Variant>()).collect::<Result<Vec<_>, _>>()?;
    if variants.len() < 2 {
        bail!("compare needs at least two modes");
    }
    let prepared = prepare(cfg)?;
    let runs = prepared.run_variants(&variants).into_iter().collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut labeled = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        write_run(out, &format!("{i}_{}", run.label), run, &prepared.gains)?;
        labeled.push(LabeledReport { label: run.label.clone(), metrics: run.metrics.clone() });
    }
    let comparison = compare_runs(labeled)?;
    let text = comparison.to_text();
    fs::write(out.join("comparison.txt"), &text)?;
    write_json(&out.join("comparison.json"), &comparison)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_repro(cfg: &ScenarioConfig, root: &Path) -> Result<ExitCode> {
    let dir = root.join(format!("repro-{}", chrono::Local::now().format("%Y%m%d-%H%M%S%.3f")));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let prepared = prepare(cfg)?;
    let runs = run_repro(&prepared)?;
    for run in runs.artifacts() {
        write_run(&dir, &run.label, run, &prepared.gains)?;
        print_metrics(run);
    }
    let gates = evaluate_gates(&prepared, &runs)?;
    let pass = hard_gates_pass(&gates);
    let labeled = runs.artifacts().iter().map(|r| LabeledReport { label: r.label.clone(), metrics: r.metrics.clone() }).collect();
    let comparison = compare_runs(labeled)?;

    let mut summary = String::new();
    summary.push_str(&comparison.to_text());
    summary.push('\n');
    for g in &gates {
        let verdict = match (g.passed, g.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-MISS",
        };
        summary.push_str(&format!("[{verdict}] criterion {} {}: {}\n", g.id, g.name, g.detail));
    }
    summary.push_str(&format!("\nhard gates: {}\n", if pass { "all passed" } else { "FAILED" }));
    fs::write(dir.join("summary.txt"), &summary)?;
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({
            "hard_gates_pass": pass,
            "gates": gates,
            "selection": prepared.selection,
            "comparison": comparison,
        }),
    )?;
    print!("{summary}");
    println!("wrote {}", dir.display());
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { cfg, json } => cmd_synth(&load(&cfg.config, &cfg.overrides)?, json),
        Command::Run { cfg, out } => cmd_run(&load(&cfg.config, &cfg.overrides)?, &out.out),
        Command::Compare { cfg, modes, out } => cmd_compare(&load(&cfg.config, &cfg.overrides)?, &modes, &out.out),
        Command::Repro { config, out } => cmd_repro(&load(config.as_deref().unwrap_or(BUNDLED), &[])?, &out.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
