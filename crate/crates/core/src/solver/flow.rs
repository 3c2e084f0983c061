use serde::{Deserialize, Serialize};

use super::grid::{BoundarySpec, CurveGrid};
use super::scheme::{apply_boundary, clear_fixed, FlowContext, FlowScheme};
use crate::error::{Error, Result};
use crate::metric::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Registered flow scheme name, optionally followed by parameters.
    pub scheme: String,
    pub s_max: f64,
    /// First step; the scheme picks one when `None`.
    pub initial_step: Option<f64>,
    pub max_step: f64,
    /// Attempted steps, accepted or not.
    pub max_steps: usize,
    /// Stationarity threshold on `max |Δx|`; `1e-9·n·N_t` when `None`.
    pub stationary_tol: Option<f64>,
    /// Allowed energy increase for an accepted step.
    pub energy_slack: f64,
    pub min_step: f64,
    /// Stop once `stagnation_window` accepted steps lowered the energy by
    /// less than `stagnation_tol · E` in total.
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: "linearly-implicit".into(),
            s_max: 1e3,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 2000,
            stationary_tol: None,
            energy_slack: 1e-9,
            min_step: 1e-14,
            stagnation_window: 20,
            stagnation_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_max > 0.0) {
            return Err(Error::config("s_max", "must be positive"));
        }
        if let Some(ds) = self.initial_step {
            if !(ds > 0.0 && ds.is_finite()) {
                return Err(Error::config("initial_step", "must be positive"));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(Error::config("max_step", "must be positive"));
        }
        if !(self.energy_slack >= 0.0) {
            return Err(Error::config("energy_slack", "must be nonnegative"));
        }
        Ok(())
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub s: f64,
    pub energy: f64,
    pub max_psi: f64,
    pub ds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub energy_before: f64,
    pub energy_after: f64,
    pub max_psi: f64,
    pub max_update: f64,
    pub ds: f64,
    /// Actual over predicted energy decrease, for schemes with a model.
    pub model_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub s: f64,
    pub grid: CurveGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Stationary,
    EnergyPlateau,
    FlowTimeExhausted,
    StepLimit,
    StepCollapsed,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub grid: CurveGrid,
    pub s: f64,
    pub energy: f64,
    pub trace: Vec<TraceRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub accepted: usize,
    pub rejected: usize,
    pub termination: Termination,
}

impl SolveReport {
    /// False only when the step budget ran out while the energy was still
    /// falling by more than 0.1% per accepted step.
    pub fn converged(&self) -> bool {
        if self.termination != Termination::StepLimit {
            return true;
        }
        let tail: Vec<f64> = self.trace.iter().rev().take(6).map(|r| r.energy).collect();
        if tail.len() < 2 {
            return false;
        }
        let steps = (tail.len() - 1) as f64;
        let (last, first) = (tail[0], tail[tail.len() - 1]);
        let rate = (first - last) / (first.abs().max(f64::MIN_POSITIVE) * steps);
        rate <= 1e-3
    }
}

fn step_inner(
    ctx: &FlowContext,
    scheme: &dyn FlowScheme,
    data: &[f64],
    energy_before: f64,
    ds: f64,
    slack: f64,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    let proposal = scheme.propose(ctx, data, ds)?;
    let energy_after = ctx.disc.energy(&proposal.data)?;
    if !energy_after.is_finite() || energy_after > energy_before + slack {
        return Err(Error::StepDiverged { s: f64::NAN, ds });
    }
    let max_update = data
        .iter()
        .zip(&proposal.data)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let model_ratio = proposal
        .predicted_decrease
        .filter(|p| *p > 0.0)
        .map(|p| (energy_before - energy_after) / p);
    Ok((
        proposal.data,
        StepDiagnostics {
            energy_before,
            energy_after,
            max_psi: proposal.max_psi,
            max_update,
            ds,
            model_ratio,
        },
    ))
}

/// One flow step of size `ds`. Fails with `StepDiverged` if the energy rises
/// by more than `slack` or stops being finite.
pub fn flow_step(
    ctx: &FlowContext,
    scheme: &dyn FlowScheme,
    grid: &CurveGrid,
    ds: f64,
    slack: f64,
) -> Result<(CurveGrid, StepDiagnostics)> {
    let energy = ctx.disc.energy(&grid.data)?;
    let (data, diag) = step_inner(ctx, scheme, &grid.data, energy, ds, slack)?;
    Ok((CurveGrid { data, ..grid.clone() }, diag))
}

/// Marches the flow from `initial` until the curve stops moving, the flow
/// time `s_max` is used up or the step budget runs out.
///
/// Steps that raise the energy are retried at half size; accepted steps grow
/// by the scheme's factor. Steps are clipped to land on every checkpoint,
/// and a snapshot of the curve is kept there.
pub fn solve(
    problem: &Problem,
    boundary: &BoundarySpec,
    initial: &CurveGrid,
    scheme: &dyn FlowScheme,
    config: &SolverConfig,
    checkpoints: &[f64],
) -> Result<SolveReport> {
    config.validate()?;
    scheme.supports(problem)?;
    if initial.dim != problem.dim() || boundary.dim() != problem.dim() {
        return Err(Error::config("x_init", "dimension does not match the system"));
    }
    let mut checkpoints: Vec<f64> = checkpoints.to_vec();
    if checkpoints.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::config("checkpoints", "must be nonnegative"));
    }
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();

    let ctx = FlowContext::new(problem, boundary, initial.n_t, initial.horizon);
    let tol = config
        .stationary_tol
        .unwrap_or(1e-9 * (problem.dim() * initial.n_t) as f64);
    let mut data = initial.data.clone();
    apply_boundary(&ctx, &mut data, false);
    let (mut energy, mut grad) = ctx.disc.gradient(&data)?;
    clear_fixed(&ctx, &mut grad);
    let psi0 = ctx.disc.flow_field_from_gradient(&data, &grad)?;
    let mut trace = vec![TraceRow {
        s: 0.0,
        energy,
        max_psi: psi0.iter().fold(0.0, |m, p| m.max(p.abs())),
        ds: 0.0,
    }];
    let mut s = 0.0;
    let mut ds = config.initial_step.unwrap_or_else(|| scheme.initial_step(&ctx));
    let mut snapshots = Vec::new();
    let mut next_cp = 0;
    while next_cp < checkpoints.len() && checkpoints[next_cp] == 0.0 {
        snapshots.push(Checkpoint {
            s: 0.0,
            grid: CurveGrid {
                data: data.clone(),
                ..initial.clone()
            },
        });
        next_cp += 1;
    }
    let (mut accepted, mut rejected) = (0, 0);
    let termination = loop {
        if s >= config.s_max {
            break Termination::FlowTimeExhausted;
        }
        if accepted + rejected >= config.max_steps {
            break Termination::StepLimit;
        }
        if ds < config.min_step {
            break Termination::StepCollapsed;
        }
        let mut step = ds.min(config.max_step).min(config.s_max - s);
        let target = checkpoints.get(next_cp).copied();
        if let Some(c) = target {
            step = step.min(c - s);
        }
        match step_inner(&ctx, scheme, &data, energy, step, config.energy_slack) {
            Ok((next, diag)) => {
                accepted += 1;
                s = match target {
                    Some(c) if step == c - s => c,
                    _ => s + step,
                };
                data = next;
                energy = diag.energy_after;
                trace.push(TraceRow {
                    s,
                    energy,
                    max_psi: diag.max_psi,
                    ds: step,
                });
                while next_cp < checkpoints.len() && checkpoints[next_cp] <= s {
                    snapshots.push(Checkpoint {
                        s: checkpoints[next_cp],
                        grid: CurveGrid {
                            data: data.clone(),
                            ..initial.clone()
                        },
                    });
                    next_cp += 1;
                }
                if diag.max_update < tol {
                    break Termination::Stationary;
                }
                let w = config.stagnation_window;
                if w > 0 && trace.len() > w {
                    let earlier = trace[trace.len() - 1 - w].energy;
                    if earlier - energy <= config.stagnation_tol * energy.abs() {
                        break Termination::EnergyPlateau;
                    }
                }
                // a poor model fit shrinks the next step, a good one grows it
                match diag.model_ratio {
                    Some(r) if r < 0.25 => ds = step / 2.0,
                    Some(r) if r < 0.75 => {}
                    _ if step == ds => ds *= scheme.growth(),
                    _ => {}
                }
            }
            Err(Error::StepDiverged { .. }) | Err(Error::SingularFrame) => {
                rejected += 1;
                ds = step / 2.0;
            }
            Err(e) => return Err(e),
        }
    };
    let grid = CurveGrid {
        data,
        ..initial.clone()
    };
    // checkpoints past the end of the flow see the final curve
    for &c in &checkpoints[next_cp..] {
        snapshots.push(Checkpoint { s: c, grid: grid.clone() });
    }
    Ok(SolveReport {
        grid,
        s,
        energy,
        trace,
        checkpoints: snapshots,
        accepted,
        rejected,
        termination,
    })
}
