//! Reading controls off a planned curve, integrating them, and auditing the
//! result against the constraints.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraints::{augment, constraint_activation, Binding, ConstraintKind, ConstraintSpec};
use crate::error::{Error, Result};
use crate::metric::Problem;
use crate::model::{ControlAffineSystem, StateLayout};
use crate::schedule::activation;
use crate::solver::CurveGrid;

/// A state trajectory sampled at `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn from_grid(grid: &CurveGrid) -> Self {
        Self {
            times: grid.times(),
            states: (0..grid.n_t).map(|i| grid.node(i).to_vec()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `u = (F̄⁻¹ (ẋ − F_d))_{n−m..n}`, the actuated coordinates of the velocity
/// error, at a single sample.
pub fn controls_at(system: &dyn ControlAffineSystem, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>> {
    let n = system.dim();
    let m = system.control_dim();
    let v = DVector::from_column_slice(xdot) - system.drift(x);
    let w = if system.identity_frame() {
        v
    } else {
        system.frame_inverse(x)? * v
    };
    Ok(w.as_slice()[n - m..].to_vec())
}

/// Finite-difference velocities: central inside, second-order one-sided at
/// both ends.
pub fn differentiate(grid: &CurveGrid) -> Vec<Vec<f64>> {
    let n_t = grid.n_t;
    let h = grid.dt();
    (0..n_t)
        .map(|i| {
            (0..grid.dim)
                .map(|k| {
                    let x = |j: usize| grid.data[j * grid.dim + k];
                    if i == 0 {
                        (-3.0 * x(0) + 4.0 * x(1) - x(2)) / (2.0 * h)
                    } else if i + 1 == n_t {
                        (3.0 * x(i) - 4.0 * x(i - 1) + x(i - 2)) / (2.0 * h)
                    } else {
                        (x(i + 1) - x(i - 1)) / (2.0 * h)
                    }
                })
                .collect()
        })
        .collect()
}

/// Controls at every node of a planned curve.
pub fn extract_controls(system: &dyn ControlAffineSystem, grid: &CurveGrid) -> Result<Vec<Vec<f64>>> {
    if grid.dim != system.dim() {
        return Err(Error::config("trajectory", "dimension does not match the system"));
    }
    differentiate(grid)
        .iter()
        .enumerate()
        .map(|(i, xd)| controls_at(system, grid.node(i), xd))
        .collect()
}

/// How controls are read off a curve and held between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlRule {
    /// Central-difference velocities at the nodes, `u` linear in between.
    CentralDifference,
    /// One control per cell from the cell's difference quotient at its
    /// midpoint, held constant across the cell. Matches the discrete action
    /// the planner minimizes, so sharp phase switches are not smeared.
    CellMidpoint,
}

impl std::str::FromStr for ControlRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central-difference" => Ok(Self::CentralDifference),
            "cell-midpoint" => Ok(Self::CellMidpoint),
            other => Err(Error::UnknownStrategy {
                kind: "control rule",
                name: other.into(),
                known: "cell-midpoint, central-difference".into(),
            }),
        }
    }
}

/// Per-cell controls; the last node repeats the last cell so there is one
/// row per node.
pub fn extract_cell_controls(system: &dyn ControlAffineSystem, grid: &CurveGrid) -> Result<Vec<Vec<f64>>> {
    if grid.dim != system.dim() {
        return Err(Error::config("trajectory", "dimension does not match the system"));
    }
    let h = grid.dt();
    let mut out = (0..grid.n_t - 1)
        .map(|c| {
            let (a, b) = (grid.node(c), grid.node(c + 1));
            let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
            let vel: Vec<f64> = a.iter().zip(b).map(|(p, q)| (q - p) / h).collect();
            controls_at(system, &mid, &vel)
        })
        .collect::<Result<Vec<_>>>()?;
    out.push(out.last().cloned().unwrap_or_default());
    Ok(out)
}

pub fn extract_with(system: &dyn ControlAffineSystem, grid: &CurveGrid, rule: ControlRule) -> Result<Vec<Vec<f64>>> {
    match rule {
        ControlRule::CentralDifference => extract_controls(system, grid),
        ControlRule::CellMidpoint => extract_cell_controls(system, grid),
    }
}

/// RK4 of `ẋ = F_d(x) + F(x) u(t)` over `times`, with `u` linear between
/// samples.
pub fn integrate(
    system: &dyn ControlAffineSystem,
    x0: &[f64],
    times: &[f64],
    controls: &[Vec<f64>],
) -> Result<Trajectory> {
    integrate_with(system, x0, times, controls, ControlRule::CentralDifference)
}

/// RK4 over `times` with controls held as `rule` prescribes: linear between
/// nodes, or constant across each cell.
pub fn integrate_with(
    system: &dyn ControlAffineSystem,
    x0: &[f64],
    times: &[f64],
    controls: &[Vec<f64>],
    rule: ControlRule,
) -> Result<Trajectory> {
    if times.len() != controls.len() || times.is_empty() {
        return Err(Error::config("controls", "need one control sample per time"));
    }
    if x0.len() != system.dim() || controls.iter().any(|u| u.len() != system.control_dim()) {
        return Err(Error::config("controls", "dimension does not match the system"));
    }
    let rhs = |x: &DVector<f64>, u: &[f64]| -> DVector<f64> {
        let xs = x.as_slice();
        system.drift(xs) + system.control_matrix(xs) * DVector::from_column_slice(u)
    };
    let mut x = DVector::from_column_slice(x0);
    let mut states = vec![x0.to_vec()];
    for i in 0..times.len() - 1 {
        let h = times[i + 1] - times[i];
        let (u0, u1) = match rule {
            ControlRule::CentralDifference => (&controls[i], &controls[i + 1]),
            ControlRule::CellMidpoint => (&controls[i], &controls[i]),
        };
        let um: Vec<f64> = u0.iter().zip(u1).map(|(a, b)| 0.5 * (a + b)).collect();
        let k1 = rhs(&x, u0);
        let k2 = rhs(&(&x + 0.5 * h * &k1), &um);
        let k3 = rhs(&(&x + 0.5 * h * &k2), &um);
        let k4 = rhs(&(&x + h * &k3), u1);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        states.push(x.as_slice().to_vec());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// `∫ |x⋆(t) − x̃(t)| dt` by the trapezoid rule.
pub fn planning_error(planned: &Trajectory, integrated: &Trajectory) -> f64 {
    let dist: Vec<f64> = planned
        .states
        .iter()
        .zip(&integrated.states)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .collect();
    planned
        .times
        .windows(2)
        .zip(dist.windows(2))
        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
        .sum()
}

/// Pass thresholds used by [`audit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditTolerances {
    /// Flight-phase force components, N.
    pub flight_force: f64,
    /// Push-only and friction-cone violation, N.
    pub contact_force: f64,
    /// Geometric constraints (terrain contact, clearance, reach).
    pub geometric: f64,
    /// Foot slip during one stance, m.
    pub stance_drift: f64,
    /// Final CoM position error, m.
    pub com: f64,
    /// Phase activation above which a constraint counts as binding.
    pub binding: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        Self {
            flight_force: 1.0,
            contact_force: 0.5,
            geometric: 0.02,
            stance_drift: 0.01,
            com: 0.05,
            binding: 0.99,
        }
    }
}

impl AuditTolerances {
    /// Threshold for a constraint, chosen by the family prefix of its id.
    pub fn for_constraint(&self, id: &str) -> f64 {
        if id.starts_with('F') && !id.starts_with("F3") {
            self.flight_force
        } else if id.starts_with("S2") || id.starts_with("S3") {
            self.contact_force
        } else {
            self.geometric
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub id: String,
    pub kind: ConstraintKind,
    pub binding: Binding,
    /// Nodes where the constraint was binding.
    pub samples: usize,
    pub max_violation: f64,
    /// Time of the worst violation, if any node was binding.
    pub worst_time: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceAudit {
    /// 1-based leg number.
    pub leg: usize,
    pub start: f64,
    pub end: f64,
    /// Mean foot position over the binding nodes of the stance.
    pub contact: [f64; 2],
    /// Largest distance of the foot from its first binding position.
    pub drift: f64,
    /// Smallest terrain-normal force.
    pub min_normal_force: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pass: bool,
    pub tolerances: AuditTolerances,
    pub com_final: Option<[f64; 2]>,
    pub com_target: Option<[f64; 2]>,
    pub com_error: Option<f64>,
    pub planning_error: Option<f64>,
    pub constraints: Vec<ConstraintAudit>,
    pub stances: Vec<StanceAudit>,
    /// Accumulated signed violation `ζ_j(T)` per constraint id.
    pub zeta_final: Vec<(String, f64)>,
}

impl AuditReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .constraints
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{}: violation {:.4} > {}", c.id, c.max_violation, c.tolerance))
            .collect();
        out.extend(
            self.stances
                .iter()
                .filter(|s| !s.pass)
                .map(|s| format!("leg {} stance [{:.3}, {:.3}]: drift {:.4}", s.leg, s.start, s.end, s.drift)),
        );
        if let Some(e) = self.com_error {
            if e > self.tolerances.com {
                out.push(format!("final CoM off by {e:.4}"));
            }
        }
        out
    }
}

fn audit_constraint(
    spec: &ConstraintSpec,
    problem: &Problem,
    traj: &Trajectory,
    tol: &AuditTolerances,
) -> ConstraintAudit {
    let mut samples = 0;
    let mut worst = (0.0f64, None);
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if constraint_activation(spec, &problem.schedule, *t, problem.smoothing.alpha) <= tol.binding {
            continue;
        }
        samples += 1;
        let v = spec.violation(spec.value(x));
        if worst.1.is_none() || v > worst.0 {
            worst = (v, Some(*t));
        }
    }
    let tolerance = tol.for_constraint(&spec.id);
    ConstraintAudit {
        id: spec.id.clone(),
        kind: spec.kind,
        binding: spec.binding,
        samples,
        max_violation: worst.0,
        worst_time: worst.1,
        tolerance,
        pass: worst.0 <= tolerance,
    }
}

fn audit_stances(problem: &Problem, traj: &Trajectory, tol: &AuditTolerances) -> Vec<StanceAudit> {
    let legs = problem.schedule.leg_count();
    let layout = StateLayout::new(legs);
    if legs == 0 || layout.dim() != problem.dim() {
        return Vec::new();
    }
    let normal_force = |leg: usize, x: &[f64]| -> f64 {
        problem
            .constraints
            .iter()
            .find(|s| s.id == format!("S2_{}", leg + 1))
            .map_or(f64::NAN, |s| -s.value(x))
    };
    let mut out = Vec::new();
    for leg in 0..legs {
        let foot = layout.foot(leg);
        for phase in problem.schedule.phases(leg).into_iter().filter(|p| p.stance) {
            let nodes: Vec<usize> = (0..traj.len())
                .filter(|&i| {
                    let t = traj.times[i];
                    t >= phase.start
                        && t <= phase.end
                        && activation(&problem.schedule, leg, t, problem.smoothing.alpha) > tol.binding
                })
                .collect();
            if nodes.is_empty() {
                continue;
            }
            let at = |i: usize| [traj.states[i][foot], traj.states[i][foot + 1]];
            let first = at(nodes[0]);
            let mut drift: f64 = 0.0;
            let mut sum = [0.0, 0.0];
            let mut min_normal = f64::INFINITY;
            for &i in &nodes {
                let p = at(i);
                drift = drift.max(((p[0] - first[0]).powi(2) + (p[1] - first[1]).powi(2)).sqrt());
                sum[0] += p[0];
                sum[1] += p[1];
                min_normal = min_normal.min(normal_force(leg, &traj.states[i]));
            }
            let count = nodes.len() as f64;
            out.push(StanceAudit {
                leg: leg + 1,
                start: phase.start,
                end: phase.end,
                contact: [sum[0] / count, sum[1] / count],
                drift,
                min_normal_force: min_normal,
                pass: drift <= tol.stance_drift,
            });
        }
    }
    out
}

/// Checks `traj` against every constraint where its phase binds, the stance
/// foot slip, and optionally the final CoM position.
pub fn audit(
    problem: &Problem,
    traj: &Trajectory,
    tol: &AuditTolerances,
    com_target: Option<[f64; 2]>,
    planning_error: Option<f64>,
) -> Result<AuditReport> {
    if traj.states.iter().any(|x| x.len() != problem.dim()) {
        return Err(Error::config("trajectory", "dimension does not match the system"));
    }
    if traj.states.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Schema("trajectory contains non-finite values".into()));
    }
    let constraints: Vec<ConstraintAudit> = problem
        .constraints
        .iter()
        .map(|s| audit_constraint(s, problem, traj, tol))
        .collect();
    let stances = audit_stances(problem, traj, tol);
    let zeta_final = match augment(problem.system.clone(), problem.constraints.clone()) {
        Ok(aug) => {
            let z = aug.accumulate(&traj.times, &traj.states, &problem.schedule, &problem.smoothing);
            let last = z.last().cloned().unwrap_or_default();
            problem.constraints.iter().map(|s| s.id.clone()).zip(last).collect()
        }
        Err(_) => Vec::new(),
    };
    let com_final = traj.states.last().filter(|x| x.len() >= 2).map(|x| [x[0], x[1]]);
    let com_error = match (com_final, com_target) {
        (Some(a), Some(b)) => Some(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()),
        _ => None,
    };
    let pass = constraints.iter().all(|c| c.pass)
        && stances.iter().all(|s| s.pass)
        && com_error.is_none_or(|e| e <= tol.com);
    Ok(AuditReport {
        pass,
        tolerances: *tol,
        com_final,
        com_target,
        com_error,
        planning_error,
        constraints,
        stances,
        zeta_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DoubleIntegrator, Unicycle};

    fn smooth_unicycle(n_t: usize) -> (CurveGrid, Vec<Vec<f64>>) {
        // integrate known smooth controls exactly enough to serve as ground truth
        let v = |t: f64| 1.0 + 0.5 * (2.0 * t).sin();
        let w = |t: f64| 0.8 * (3.0 * t).cos();
        let theta = |t: f64| 0.8 / 3.0 * (3.0 * t).sin();
        let fine = 20_000;
        let mut x = [0.0, 0.0];
        let mut samples = vec![[0.0, 0.0]];
        let h = 1.0 / fine as f64;
        for i in 0..fine {
            let t = i as f64 * h;
            let f = |t: f64| [v(t) * theta(t).cos(), v(t) * theta(t).sin()];
            let (a, b, c) = (f(t), f(t + 0.5 * h), f(t + h));
            x[0] += h / 6.0 * (a[0] + 4.0 * b[0] + c[0]);
            x[1] += h / 6.0 * (a[1] + 4.0 * b[1] + c[1]);
            samples.push(x);
        }
        let mut data = Vec::new();
        let mut u = Vec::new();
        for i in 0..n_t {
            let t = i as f64 / (n_t - 1) as f64;
            let s = samples[i * fine / (n_t - 1)];
            data.extend([s[0], s[1], theta(t)]);
            u.push(vec![v(t), w(t)]);
        }
        (CurveGrid::new(1.0, n_t, 3, data).unwrap(), u)
    }

    #[test]
    fn extraction_recovers_known_controls() {
        let (grid, u) = smooth_unicycle(201);
        let got = extract_controls(&Unicycle, &grid).unwrap();
        for (a, b) in got.iter().zip(&u) {
            assert!((a[0] - b[0]).abs() < 1e-3 && (a[1] - b[1]).abs() < 1e-3, "{a:?} {b:?}");
        }
    }

    #[test]
    fn round_trip_error_is_second_order() {
        let err = |n_t: usize| {
            let (grid, _) = smooth_unicycle(n_t);
            let u = extract_controls(&Unicycle, &grid).unwrap();
            let back = integrate(&Unicycle, grid.node(0), &grid.times(), &u).unwrap();
            let planned = Trajectory::from_grid(&grid);
            planned
                .states
                .iter()
                .zip(&back.states)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(101), err(201));
        assert!(fine < 1e-3);
        assert!((coarse / fine).log2() > 1.8, "{coarse} {fine}");
    }

    #[test]
    fn integrator_is_exact_for_linear_controls() {
        let sys = DoubleIntegrator { dof: 1 };
        let times: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let u: Vec<Vec<f64>> = times.iter().map(|t| vec![6.0 - 12.0 * t]).collect();
        let traj = integrate(&sys, &[0.0, 0.0], &times, &u).unwrap();
        let end = traj.states.last().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-12 && end[1].abs() < 1e-12);
    }

    #[test]
    fn planning_error_of_identical_curves_is_zero() {
        let (grid, _) = smooth_unicycle(11);
        let t = Trajectory::from_grid(&grid);
        assert_eq!(planning_error(&t, &t), 0.0);
        let mut shifted = t.clone();
        for x in &mut shifted.states {
            x[0] += 0.1;
        }
        assert!((planning_error(&t, &shifted) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn family_tolerances() {
        let tol = AuditTolerances::default();
        assert_eq!(tol.for_constraint("F1_2"), 1.0);
        assert_eq!(tol.for_constraint("F3_1"), 0.02);
        assert_eq!(tol.for_constraint("S3b_1"), 0.5);
        assert_eq!(tol.for_constraint("C1"), 0.02);
    }
}
