//! Interchangeable time-stepping schemes for the flow in `s`.

use std::sync::Arc;

use nalgebra::DVector;

use super::energy::Discretization;
use super::grid::{BoundarySpec, BoundaryValue};
use crate::error::{Error, Result};
use crate::metric::Problem;
use crate::registry::{param_f64, Registry};

pub struct FlowContext<'a> {
    pub disc: Discretization<'a>,
    pub boundary: &'a BoundarySpec,
}

impl<'a> FlowContext<'a> {
    pub fn new(problem: &'a Problem, boundary: &'a BoundarySpec, n_t: usize, horizon: f64) -> Self {
        Self {
            disc: Discretization::new(problem, n_t, horizon),
            boundary,
        }
    }

    pub fn problem(&self) -> &'a Problem {
        self.disc.problem
    }

    pub fn n_t(&self) -> usize {
        self.disc.n_t
    }

    pub fn dim(&self) -> usize {
        self.disc.problem.dim()
    }
}

/// A candidate curve after one step, before the energy check.
pub struct Proposal {
    pub data: Vec<f64>,
    /// `max |Ψ|` at the curve the step started from.
    pub max_psi: f64,
    /// Energy decrease the scheme's local model predicts, if it has one.
    pub predicted_decrease: Option<f64>,
}

pub trait FlowScheme: Send + Sync {
    fn name(&self) -> &'static str;

    /// Advances `data` by `ds` in flow time.
    fn propose(&self, ctx: &FlowContext, data: &[f64], ds: f64) -> Result<Proposal>;

    fn initial_step(&self, ctx: &FlowContext) -> f64 {
        let dt = ctx.disc.dt();
        dt * dt / 8.0
    }

    /// Step growth factor after an accepted step.
    fn growth(&self) -> f64;

    /// Rejects systems the scheme cannot handle.
    fn supports(&self, _problem: &Problem) -> Result<()> {
        Ok(())
    }
}

/// Pins every fixed boundary component to its value. With `drift_match`,
/// free end components are reset so the one-sided difference at the end
/// equals the drift there.
pub fn apply_boundary(ctx: &FlowContext, data: &mut [f64], drift_match: bool) {
    let n = ctx.dim();
    let n_t = ctx.n_t();
    let dt = ctx.disc.dt();
    let system = &ctx.problem().system;
    let ends = [(0usize, 1usize, -1.0), (n_t - 1, n_t - 2, 1.0)];
    for (node, neighbour, sign) in ends {
        let spec = if node == 0 { &ctx.boundary.start } else { &ctx.boundary.end };
        let drift = drift_match.then(|| system.drift(&data[node * n..(node + 1) * n]));
        for k in 0..n {
            match spec[k] {
                BoundaryValue::Fixed(v) => data[node * n + k] = v,
                BoundaryValue::Free => {
                    if let Some(fd) = &drift {
                        data[node * n + k] = data[neighbour * n + k] + sign * dt * fd[k];
                    }
                }
            }
        }
    }
}

/// Zeroes the entries of `v` that belong to pinned boundary components.
pub(crate) fn clear_fixed(ctx: &FlowContext, v: &mut [f64]) {
    let n = ctx.dim();
    let n_t = ctx.n_t();
    for node in [0, n_t - 1] {
        for k in 0..n {
            if ctx.boundary.is_fixed(node, n_t, k) {
                v[node * n + k] = 0.0;
            }
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Forward Euler on the discrete metric gradient. Free ends move with their
/// own (natural boundary) gradient.
pub struct ExplicitEuler {
    pub growth: f64,
}

impl FlowScheme for ExplicitEuler {
    fn name(&self) -> &'static str {
        "explicit-euler"
    }

    fn propose(&self, ctx: &FlowContext, data: &[f64], ds: f64) -> Result<Proposal> {
        let (_, mut grad) = ctx.disc.gradient(data)?;
        clear_fixed(ctx, &mut grad);
        let psi = ctx.disc.flow_field_from_gradient(data, &grad)?;
        let mut next: Vec<f64> = data.iter().zip(&psi).map(|(x, p)| x + ds * p).collect();
        apply_boundary(ctx, &mut next, false);
        Ok(Proposal {
            data: next,
            max_psi: max_abs(&psi),
            predicted_decrease: None,
        })
    }

    fn growth(&self) -> f64 {
        self.growth
    }
}

/// Forward Euler on the pointwise Euler–Lagrange operator with central
/// differences, smoothed-step time derivatives and drift-matched free ends.
pub struct PointwiseEuler {
    pub growth: f64,
}

impl FlowScheme for PointwiseEuler {
    fn name(&self) -> &'static str {
        "pointwise-euler"
    }

    fn supports(&self, problem: &Problem) -> Result<()> {
        if problem.system.constant_frame() {
            Ok(())
        } else {
            Err(Error::UnsupportedSystem {
                scheme: self.name().into(),
            })
        }
    }

    fn propose(&self, ctx: &FlowContext, data: &[f64], ds: f64) -> Result<Proposal> {
        let n = ctx.dim();
        let n_t = ctx.n_t();
        let dt = ctx.disc.dt();
        let p = ctx.problem();
        let mut psi = vec![0.0; data.len()];
        for i in 1..n_t - 1 {
            let prev = &data[(i - 1) * n..i * n];
            let cur = &data[i * n..(i + 1) * n];
            let next = &data[(i + 1) * n..(i + 2) * n];
            let xd: Vec<f64> = (0..n).map(|k| (next[k] - prev[k]) / (2.0 * dt)).collect();
            let xdd: Vec<f64> = (0..n).map(|k| (next[k] - 2.0 * cur[k] + prev[k]) / (dt * dt)).collect();
            let v = p.euler_lagrange_rhs(i as f64 * dt, cur, &xd, &xdd)?;
            psi[i * n..(i + 1) * n].copy_from_slice(v.as_slice());
        }
        let mut next: Vec<f64> = data.iter().zip(&psi).map(|(x, p)| x + ds * p).collect();
        apply_boundary(ctx, &mut next, true);
        Ok(Proposal {
            data: next,
            max_psi: max_abs(&psi),
            predicted_decrease: None,
        })
    }

    fn growth(&self) -> f64 {
        self.growth
    }
}

/// Linearly implicit Euler: solves `(M/Δs + H) δ = −∇E_h` where `M` is the
/// block-diagonal metric mass and `H` the Gauss–Newton Hessian. Stable for
/// any `Δs`; large steps approach Gauss–Newton on the discrete action.
pub struct LinearlyImplicit {
    pub growth: f64,
}

impl FlowScheme for LinearlyImplicit {
    fn name(&self) -> &'static str {
        "linearly-implicit"
    }

    fn propose(&self, ctx: &FlowContext, data: &[f64], ds: f64) -> Result<Proposal> {
        let n = ctx.dim();
        let n_t = ctx.n_t();
        let (_, mut grad, mut hess) = ctx.disc.gauss_newton(data)?;
        clear_fixed(ctx, &mut grad);
        let mass = ctx.disc.mass_blocks(data)?;
        let mut max_psi: f64 = 0.0;
        for (i, m) in mass.iter().enumerate() {
            let chol = m.clone().cholesky().ok_or(Error::SingularFrame)?;
            let psi = chol.solve(&DVector::from_column_slice(&grad[i * n..(i + 1) * n]));
            max_psi = max_psi.max(psi.amax());
            hess.diag[i] += m / ds;
        }
        for node in [0, n_t - 1] {
            for k in 0..n {
                if ctx.boundary.is_fixed(node, n_t, k) {
                    hess.pin(node, k);
                }
            }
        }
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let delta = hess.solve(&rhs).ok_or(Error::StepDiverged { s: f64::NAN, ds })?;
        // (H + M/Δs) δ = −g gives the Gauss–Newton model decrease
        // −gᵀδ − ½δᵀHδ = ½(−gᵀδ + δᵀMδ/Δs) without another product with H.
        let g_delta: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
        let m_delta: f64 = mass
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let d = DVector::from_column_slice(&delta[i * n..(i + 1) * n]);
                d.dot(&(m * &d))
            })
            .sum();
        let mut next: Vec<f64> = data.iter().zip(&delta).map(|(x, d)| x + d).collect();
        apply_boundary(ctx, &mut next, false);
        Ok(Proposal {
            data: next,
            max_psi,
            predicted_decrease: Some(0.5 * (m_delta / ds - g_delta)),
        })
    }

    fn initial_step(&self, ctx: &FlowContext) -> f64 {
        let dt = ctx.disc.dt();
        dt * dt
    }

    fn growth(&self) -> f64 {
        self.growth
    }
}

fn growth_param(kind: &str, params: &[&str], default: f64) -> Result<f64> {
    let growth = if params.is_empty() { default } else { param_f64(kind, params, 0)? };
    if !(growth >= 1.0 && growth.is_finite()) {
        return Err(Error::config("growth", format!("{growth} must be at least 1")));
    }
    Ok(growth)
}

pub fn scheme_registry() -> Registry<dyn FlowScheme> {
    let mut reg: Registry<dyn FlowScheme> = Registry::new("flow scheme");
    reg.register(
        "linearly-implicit",
        "linearly-implicit [growth=2]: metric-weighted Gauss-Newton steps",
        |p| {
            let growth = growth_param("linearly-implicit", p, 2.0)?;
            Ok(Arc::new(LinearlyImplicit { growth }) as Arc<dyn FlowScheme>)
        },
    );
    reg.register(
        "explicit-euler",
        "explicit-euler [growth=1.2]: forward Euler on the discrete gradient",
        |p| {
            let growth = growth_param("explicit-euler", p, 1.2)?;
            Ok(Arc::new(ExplicitEuler { growth }) as Arc<dyn FlowScheme>)
        },
    );
    reg.register(
        "pointwise-euler",
        "pointwise-euler [growth=1.2]: forward Euler on the pointwise Euler-Lagrange operator",
        |p| {
            let growth = growth_param("pointwise-euler", p, 1.2)?;
            Ok(Arc::new(PointwiseEuler { growth }) as Arc<dyn FlowScheme>)
        },
    );
    reg
}
