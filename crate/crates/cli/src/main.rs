//! `aghf`: plan, sweep and audit legged locomotion scenarios.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or input
//! error, 3 flow not converged, 4 audit failed. Output files are written
//! before a 3 or 4 is returned.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use aghf_core::config::ScenarioConfig;
use aghf_core::io;
use aghf_core::pipeline::{self, PlanOutcome};
use aghf_core::Error;

/// Overrides the output directory of every command.
const OUTPUT_ENV: &str = "AGHF_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "aghf", version, about = "Legged locomotion planning by affine geometric heat flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a scenario (a config file, or the built-in `oneleg` / `twoleg`).
    Plan { config: String },
    /// Planning error along the flow for several penalties.
    Sweep {
        config: String,
        #[arg(long, num_args = 1.., required = true)]
        lambdas: Vec<f64>,
        #[arg(long, num_args = 1.., required = true)]
        checkpoints: Vec<f64>,
    },
    /// Re-run the audit on a stored trajectory CSV.
    Audit {
        csv: PathBuf,
        config: String,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in scenarios and registered strategies.
    List,
}

mod exit {
    pub const OK: u8 = 0;
    pub const RUNTIME: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
    pub const AUDIT: u8 = 4;
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::Schema(_)
        | Error::UnknownStrategy { .. }
        | Error::InvalidOffset { .. }
        | Error::InvalidSchedule(_)
        | Error::SingularMetric { .. }
        | Error::UnsupportedSystem { .. } => exit::CONFIG,
        _ => exit::RUNTIME,
    }
}

fn output_dir(cfg: &ScenarioConfig) -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone())
}

#[derive(Serialize)]
struct Versions {
    aghf: &'static str,
    aghf_core: &'static str,
}

const VERSIONS: Versions = Versions {
    aghf: env!("CARGO_PKG_VERSION"),
    aghf_core: aghf_core::VERSION,
};

#[derive(Serialize)]
struct StageSummary {
    lambda: f64,
    termination: &'static str,
    converged: bool,
    accepted_steps: usize,
    rejected_steps: usize,
    flow_time: f64,
    initial_energy: f64,
    final_energy: f64,
}

#[derive(Serialize)]
struct PlanManifest<'a> {
    command: &'static str,
    source: &'a str,
    versions: Versions,
    config: &'a ScenarioConfig,
    timings_s: pipeline::Timings,
    convergence: Vec<StageSummary>,
    converged: bool,
    planning_error: f64,
    planning_error_norm: &'static str,
    final_state_error: f64,
    audit_pass: bool,
    audit_failures: Vec<String>,
    exit_code: u8,
    files: Vec<&'static str>,
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    command: &'static str,
    source: &'a str,
    versions: Versions,
    config: &'a ScenarioConfig,
    lambdas: &'a [f64],
    checkpoints: &'a [f64],
    wall_clock_s: f64,
    failed_cells: usize,
    planning_error_norm: &'static str,
    files: Vec<&'static str>,
}

fn write_plan_files(dir: &Path, source: &str, cfg: &ScenarioConfig, out: &PlanOutcome) -> Result<u8, Error> {
    let (s, c) = (&out.state_names, &out.control_names);
    io::write_atomic(&dir.join("x_star.csv"), &io::trajectory_csv(&out.planned, &out.controls, s, c)?)?;
    io::write_atomic(&dir.join("x_tilde.csv"), &io::trajectory_csv(&out.integrated, &out.controls, s, c)?)?;
    io::write_atomic(&dir.join("u.csv"), &io::controls_csv(&out.planned.times, &out.controls, c)?)?;
    let stages: Vec<(f64, &[aghf_core::solver::TraceRow])> =
        out.stages.iter().map(|st| (st.lambda, st.report.trace.as_slice())).collect();
    io::write_atomic(&dir.join("convergence.csv"), &io::trace_csv(&stages)?)?;
    io::write_json(&dir.join("audit.json"), &out.audit)?;

    let code = if !out.converged() {
        exit::NOT_CONVERGED
    } else if !out.audit.pass || out.final_state_error > cfg.final_state_tol {
        exit::AUDIT
    } else {
        exit::OK
    };
    let mut failures = out.audit.failures();
    if out.final_state_error > cfg.final_state_tol {
        failures.push(format!("final state off by {:.4}", out.final_state_error));
    }
    let manifest = PlanManifest {
        command: "plan",
        source,
        versions: VERSIONS,
        config: cfg,
        timings_s: out.timings,
        convergence: out
            .stages
            .iter()
            .map(|st| StageSummary {
                lambda: st.lambda,
                termination: pipeline::termination_label(&st.report.termination),
                converged: st.report.converged(),
                accepted_steps: st.report.accepted,
                rejected_steps: st.report.rejected,
                flow_time: st.report.s,
                initial_energy: st.report.trace.first().map_or(f64::NAN, |r| r.energy),
                final_energy: st.report.energy,
            })
            .collect(),
        converged: out.converged(),
        planning_error: out.planning_error,
        planning_error_norm: "euclidean",
        final_state_error: out.final_state_error,
        audit_pass: out.audit.pass,
        audit_failures: failures,
        exit_code: code,
        files: vec!["x_star.csv", "x_tilde.csv", "u.csv", "convergence.csv", "audit.json", "manifest.json"],
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(code)
}

fn run_plan(source: &str) -> Result<u8, Error> {
    let cfg = ScenarioConfig::load(source)?;
    let dir = output_dir(&cfg);
    let out = pipeline::plan(&cfg)?;
    let code = write_plan_files(&dir, source, &cfg, &out)?;
    let last = out.final_report();
    eprintln!(
        "{}: {} after {} steps, E = {:.6e}, e = {:.4e}, audit {}",
        cfg.name,
        pipeline::termination_label(&last.termination),
        last.accepted,
        last.energy,
        out.planning_error,
        if out.audit.pass { "pass" } else { "FAIL" }
    );
    for f in out.audit.failures() {
        eprintln!("  {f}");
    }
    println!("{}", dir.display());
    Ok(code)
}

fn run_sweep(source: &str, lambdas: &[f64], checkpoints: &[f64]) -> Result<u8, Error> {
    let cfg = ScenarioConfig::load(source)?;
    let dir = output_dir(&cfg).join("sweep");
    let clock = Instant::now();
    let rows = pipeline::sweep(&cfg, lambdas, checkpoints, Some(&dir.join("cells")))?;
    io::write_atomic(&dir.join("sweep.csv"), &io::sweep_csv(&rows)?)?;
    let failed_cells = lambdas
        .iter()
        .filter(|l| rows.iter().any(|r| r.lambda == **l && r.planning_error.is_none()))
        .count();
    let manifest = SweepManifest {
        command: "sweep",
        source,
        versions: VERSIONS,
        config: &cfg,
        lambdas,
        checkpoints,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        failed_cells,
        planning_error_norm: "euclidean",
        files: vec!["sweep.csv", "cells/", "manifest.json"],
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    println!("{}", dir.join("sweep.csv").display());
    Ok(exit::OK)
}

fn run_audit(csv: &Path, source: &str, out: Option<&Path>) -> Result<u8, Error> {
    let cfg = ScenarioConfig::load(source)?;
    let (traj, _) = io::read_trajectory_csv(csv, &cfg.state_names(), &cfg.control_names()?)?;
    let report = pipeline::audit_trajectory(&cfg, &traj)?;
    let text = io::json_string(&report)?;
    if let Some(path) = out {
        io::write_atomic(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(if report.pass { exit::OK } else { exit::AUDIT })
}

fn list() -> u8 {
    let groups = [
        ("scenarios", aghf_core::config::scenario_registry().names().map(String::from).collect::<Vec<_>>()),
        ("systems", aghf_core::model::system_registry().names().map(String::from).collect()),
        ("terrains", aghf_core::model::terrain::terrain_registry().names().map(String::from).collect()),
        ("flow schemes", aghf_core::solver::scheme_registry().names().map(String::from).collect()),
    ];
    for (title, names) in groups {
        println!("{title}: {}", names.join(", "));
    }
    exit::OK
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan { config } => run_plan(config),
        Command::Sweep {
            config,
            lambdas,
            checkpoints,
        } => run_sweep(config, lambdas, checkpoints),
        Command::Audit { csv, config, out } => run_audit(csv, config, out.as_deref()),
        Command::List => Ok(list()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
