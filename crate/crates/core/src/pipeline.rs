//! End-to-end runs: plan one scenario, or sweep the penalty.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::extraction::{audit, extract_with, integrate_with, planning_error, AuditReport, Trajectory};
use crate::io::{self, SweepRow};
use crate::metric::Problem;
use crate::solver::{initial_curve, scheme_registry, solve, CurveGrid, FlowScheme, SolveReport, Termination};

/// One solve of the continuation ladder.
#[derive(Debug, Clone)]
pub struct Stage {
    pub lambda: f64,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timings {
    pub solve: f64,
    pub extract: f64,
    pub integrate: f64,
    pub audit: f64,
}

#[derive(Clone)]
pub struct PlanOutcome {
    pub problem: Problem,
    pub state_names: Vec<String>,
    pub control_names: Vec<String>,
    /// Ladder stages followed by the final solve at the target penalty.
    pub stages: Vec<Stage>,
    pub planned: Trajectory,
    pub controls: Vec<Vec<f64>>,
    pub integrated: Trajectory,
    pub planning_error: f64,
    /// Distance of `x̃(T)` from the pinned components of `x_fin`.
    pub final_state_error: f64,
    pub audit: AuditReport,
    pub timings: Timings,
}

impl PlanOutcome {
    pub fn final_report(&self) -> &SolveReport {
        &self.stages.last().expect("at least one stage").report
    }

    pub fn converged(&self) -> bool {
        self.final_report().converged()
    }
}

fn scheme_for(cfg: &ScenarioConfig) -> Result<Arc<dyn FlowScheme>> {
    scheme_registry().build_from_spec(&cfg.solver.scheme)
}

pub fn initial_guess(cfg: &ScenarioConfig) -> Result<CurveGrid> {
    initial_curve(&cfg.boundary()?, &cfg.resolve_hints()?, cfg.n_t, cfg.horizon)
}

/// Controls read off `grid` by the configured rule, integrated from its
/// first node.
pub fn extract_and_integrate(
    cfg: &ScenarioConfig,
    problem: &Problem,
    grid: &CurveGrid,
) -> Result<(Trajectory, Vec<Vec<f64>>, Trajectory, f64)> {
    let planned = Trajectory::from_grid(grid);
    let controls = extract_with(problem.system.as_ref(), grid, cfg.control_rule)?;
    let integrated = integrate_with(problem.system.as_ref(), grid.node(0), &planned.times, &controls, cfg.control_rule)?;
    let e = planning_error(&planned, &integrated);
    Ok((planned, controls, integrated, e))
}

fn final_state_error(cfg: &ScenarioConfig, traj: &Trajectory) -> f64 {
    let last = traj.states.last().map(Vec::as_slice).unwrap_or(&[]);
    cfg.x_fin
        .iter()
        .zip(last)
        .filter_map(|(b, x)| b.fixed().map(|v| (v - x).powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// Audit of a stored trajectory, as the plan command writes it.
pub fn audit_trajectory(cfg: &ScenarioConfig, traj: &Trajectory) -> Result<AuditReport> {
    let problem = cfg.problem(cfg.lambda)?;
    audit(&problem, traj, &cfg.tolerances, cfg.com_target(), None)
}

/// Flows the initial curve through the continuation ladder, then at the
/// target penalty, and audits the integrated path.
pub fn plan(cfg: &ScenarioConfig) -> Result<PlanOutcome> {
    let scheme = scheme_for(cfg)?;
    let boundary = cfg.boundary()?;
    let mut timings = Timings::default();
    let mut curve = initial_guess(cfg)?;
    let mut stages = Vec::new();
    let clock = Instant::now();
    let ladder: Vec<f64> = cfg.continuation.iter().copied().filter(|l| *l < cfg.lambda).collect();
    for &lambda in &ladder {
        let problem = cfg.problem(lambda)?;
        let report = solve(&problem, &boundary, &curve, scheme.as_ref(), &cfg.solver, &[])?;
        curve = report.grid.clone();
        stages.push(Stage { lambda, report });
    }
    let problem = cfg.problem(cfg.lambda)?;
    let report = solve(&problem, &boundary, &curve, scheme.as_ref(), &cfg.solver, &cfg.checkpoints)?;
    timings.solve = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let planned = Trajectory::from_grid(&report.grid);
    let controls = extract_with(problem.system.as_ref(), &report.grid, cfg.control_rule)?;
    timings.extract = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let integrated = integrate_with(
        problem.system.as_ref(),
        report.grid.node(0),
        &planned.times,
        &controls,
        cfg.control_rule,
    )?;
    let e = planning_error(&planned, &integrated);
    timings.integrate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let audit = audit(&problem, &integrated, &cfg.tolerances, cfg.com_target(), None)?;
    timings.audit = clock.elapsed().as_secs_f64();

    stages.push(Stage {
        lambda: cfg.lambda,
        report,
    });
    Ok(PlanOutcome {
        final_state_error: final_state_error(cfg, &integrated),
        state_names: cfg.state_names(),
        control_names: cfg.control_names()?,
        problem,
        stages,
        planned,
        controls,
        integrated,
        planning_error: e,
        audit,
        timings,
    })
}

/// Planning error at each checkpoint of a cold-started flow at `lambda`.
/// A failed cell yields rows with missing values.
pub fn sweep_cell(cfg: &ScenarioConfig, lambda: f64, checkpoints: &[f64]) -> Vec<SweepRow> {
    let run = || -> Result<Vec<SweepRow>> {
        let problem = cfg.problem(lambda)?;
        let scheme = scheme_for(cfg)?;
        let report = solve(&problem, &cfg.boundary()?, &initial_guess(cfg)?, scheme.as_ref(), &cfg.solver, checkpoints)?;
        let status = if report.converged() { "ok" } else { "not-converged" };
        report
            .checkpoints
            .iter()
            .map(|cp| {
                let (_, _, _, e) = extract_and_integrate(cfg, &problem, &cp.grid)?;
                let energy = crate::solver::Discretization::for_grid(&problem, &cp.grid).energy(&cp.grid.data)?;
                Ok(SweepRow {
                    lambda,
                    s: cp.s,
                    planning_error: Some(e).filter(|e| e.is_finite()),
                    energy: Some(energy),
                    status: status.into(),
                })
            })
            .collect()
    };
    let mut cps = checkpoints.to_vec();
    cps.sort_by(f64::total_cmp);
    cps.dedup();
    run().unwrap_or_else(|e| {
        cps.iter()
            .map(|&s| SweepRow {
                lambda,
                s,
                planning_error: None,
                energy: None,
                status: format!("failed: {e}"),
            })
            .collect()
    })
}

/// Runs every penalty concurrently. Rows come back grouped by penalty in
/// input order. With `cell_dir`, each cell's rows are also written there as
/// they finish.
pub fn sweep(cfg: &ScenarioConfig, lambdas: &[f64], checkpoints: &[f64], cell_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    if lambdas.len() < 2 {
        return Err(crate::error::Error::config("lambdas", "need at least two penalties"));
    }
    if checkpoints.is_empty() || checkpoints.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(crate::error::Error::config("checkpoints", "need nonnegative flow times"));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(crate::error::Error::config("lambdas", "penalties must be positive"));
    }
    let cells: Vec<Result<Vec<SweepRow>>> = lambdas
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let rows = sweep_cell(cfg, lambda, checkpoints);
            if let Some(dir) = cell_dir {
                io::write_atomic(&dir.join(format!("cell_{i:03}.csv")), &io::sweep_csv(&rows)?)?;
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for c in cells {
        out.extend(c?);
    }
    Ok(out)
}

pub fn termination_label(t: &Termination) -> &'static str {
    match t {
        Termination::Stationary => "stationary",
        Termination::EnergyPlateau => "energy-plateau",
        Termination::FlowTimeExhausted => "flow-time-exhausted",
        Termination::StepLimit => "step-limit",
        Termination::StepCollapsed => "step-collapsed",
    }
}
