//! Discrete action on a uniform grid.
//!
//! ```text
//! E_h = Σ_cells Δt |r_c|² + Σ_nodes ω_i Δt P(t_i, x_i)
//! r_c = D(t_c)^{1/2} F̄(x̄_c)⁻¹ ((x_{c+1} − x_c)/Δt − F_d(x̄_c))
//! ```
//!
//! with `x̄_c` the cell midpoint, `P` the constraint penalty and `ω` the
//! trapezoid weights. The flow direction at node `i` is the metric gradient
//! `Ψ_i = −G_i⁻¹ ∂E_h/∂x_i / (ω_i Δt)`, a consistent discretization of the
//! Euler–Lagrange operator that is also the exact descent direction of `E_h`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::blocktri::BlockTridiagonal;
use super::grid::CurveGrid;
use crate::error::{Error, Result};
use crate::metric::{Problem, StepDerivative};

/// Trapezoid weight of node `i` out of `n_t`.
pub fn trapezoid_weight(i: usize, n_t: usize) -> f64 {
    if i == 0 || i + 1 == n_t {
        0.5
    } else {
        1.0
    }
}

struct CellTerms {
    energy: f64,
    grad_left: DVector<f64>,
    grad_right: DVector<f64>,
    /// Gauss–Newton blocks `(left-left, right-right, right-left)`.
    blocks: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
}

struct NodeTerms {
    energy: f64,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
}

pub struct Discretization<'a> {
    pub problem: &'a Problem,
    pub n_t: usize,
    pub horizon: f64,
}

impl<'a> Discretization<'a> {
    pub fn new(problem: &'a Problem, n_t: usize, horizon: f64) -> Self {
        Self { problem, n_t, horizon }
    }

    pub fn for_grid(problem: &'a Problem, grid: &CurveGrid) -> Self {
        Self::new(problem, grid.n_t, grid.horizon)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_t - 1) as f64
    }

    fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n_t {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    fn cell_time(&self, c: usize) -> f64 {
        (c as f64 + 0.5) * self.dt()
    }

    fn cell(&self, c: usize, data: &[f64], want_blocks: bool) -> Result<CellTerms> {
        let n = self.problem.dim();
        let dt = self.dt();
        let left = &data[c * n..(c + 1) * n];
        let right = &data[(c + 1) * n..(c + 2) * n];
        let mid: Vec<f64> = left.iter().zip(right).map(|(a, b)| 0.5 * (a + b)).collect();
        let vel: Vec<f64> = left.iter().zip(right).map(|(a, b)| (b - a) / dt).collect();
        let res = self.problem.residual(self.cell_time(c), &mid, &vel)?;
        let half_j = 0.5 * &res.d_x;
        let w_dt = &res.d_xdot / dt;
        let a_left = &half_j - &w_dt;
        let a_right = &half_j + &w_dt;
        let scale = 2.0 * dt;
        let blocks = want_blocks.then(|| {
            (
                scale * a_left.transpose() * &a_left,
                scale * a_right.transpose() * &a_right,
                scale * a_right.transpose() * &a_left,
            )
        });
        Ok(CellTerms {
            energy: dt * res.r.norm_squared(),
            grad_left: scale * a_left.transpose() * &res.r,
            grad_right: scale * a_right.transpose() * &res.r,
            blocks,
        })
    }

    fn node(&self, i: usize, data: &[f64], want_hess: bool) -> NodeTerms {
        let n = self.problem.dim();
        let x = &data[i * n..(i + 1) * n];
        let scale = trapezoid_weight(i, self.n_t) * self.dt();
        let mut grad = vec![0.0; n];
        let mut hess = want_hess.then(|| DMatrix::zeros(n, n));
        let energy = self.problem.accumulate_penalty(
            self.time(i),
            x,
            scale,
            StepDerivative::Exact,
            &mut grad,
            hess.as_mut().map(|h| (h, scale)),
        );
        NodeTerms {
            energy: scale * energy,
            grad,
            hess,
        }
    }

    fn check(&self, data: &[f64]) -> Result<()> {
        if data.len() != self.n_t * self.problem.dim() {
            return Err(Error::config("grid", "size does not match the problem"));
        }
        Ok(())
    }

    pub fn energy(&self, data: &[f64]) -> Result<f64> {
        self.check(data)?;
        let cells: Vec<f64> = (0..self.n_t - 1)
            .into_par_iter()
            .map(|c| self.cell(c, data, false).map(|t| t.energy))
            .collect::<Result<_>>()?;
        let nodes: Vec<f64> = (0..self.n_t)
            .into_par_iter()
            .map(|i| self.node(i, data, false).energy)
            .collect();
        Ok(cells.iter().sum::<f64>() + nodes.iter().sum::<f64>())
    }

    fn assemble(&self, data: &[f64], want_hess: bool) -> Result<(f64, Vec<f64>, Option<BlockTridiagonal>)> {
        self.check(data)?;
        let n = self.problem.dim();
        let cells: Vec<CellTerms> = (0..self.n_t - 1)
            .into_par_iter()
            .map(|c| self.cell(c, data, want_hess))
            .collect::<Result<_>>()?;
        let nodes: Vec<NodeTerms> = (0..self.n_t)
            .into_par_iter()
            .map(|i| self.node(i, data, want_hess))
            .collect();
        let mut energy = 0.0;
        let mut grad = vec![0.0; data.len()];
        let mut hess = want_hess.then(|| BlockTridiagonal::zeros(self.n_t, n));
        for (c, cell) in cells.into_iter().enumerate() {
            energy += cell.energy;
            for k in 0..n {
                grad[c * n + k] += cell.grad_left[k];
                grad[(c + 1) * n + k] += cell.grad_right[k];
            }
            if let (Some(h), Some((ll, rr, rl))) = (hess.as_mut(), cell.blocks) {
                h.diag[c] += ll;
                h.diag[c + 1] += rr;
                h.lower[c] += rl;
            }
        }
        for (i, node) in nodes.into_iter().enumerate() {
            energy += node.energy;
            for k in 0..n {
                grad[i * n + k] += node.grad[k];
            }
            if let (Some(h), Some(nh)) = (hess.as_mut(), node.hess) {
                h.diag[i] += nh;
            }
        }
        Ok((energy, grad, hess))
    }

    /// `(E_h, ∇E_h)`.
    pub fn gradient(&self, data: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.assemble(data, false).map(|(e, g, _)| (e, g))
    }

    /// `(E_h, ∇E_h, Gauss–Newton Hessian)`.
    pub fn gauss_newton(&self, data: &[f64]) -> Result<(f64, Vec<f64>, BlockTridiagonal)> {
        self.assemble(data, true)
            .map(|(e, g, h)| (e, g, h.expect("hessian requested")))
    }

    /// Block-diagonal mass `ω_i Δt G(t_i, x_i)` inducing the metric on curves.
    pub fn mass_blocks(&self, data: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = self.problem.dim();
        (0..self.n_t)
            .into_par_iter()
            .map(|i| {
                let g = self.problem.metric(self.time(i), &data[i * n..(i + 1) * n])?;
                Ok(g * (trapezoid_weight(i, self.n_t) * self.dt()))
            })
            .collect()
    }

    /// `Ψ_i = −(ω_i Δt G_i)⁻¹ ∂E_h/∂x_i` for every node, given the gradient.
    pub fn flow_field_from_gradient(&self, data: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        let n = self.problem.dim();
        let mass = self.mass_blocks(data)?;
        let mut psi = vec![0.0; data.len()];
        for (i, m) in mass.into_iter().enumerate() {
            let g = DVector::from_column_slice(&grad[i * n..(i + 1) * n]);
            let chol = m.cholesky().ok_or(Error::SingularFrame)?;
            let p = -chol.solve(&g);
            psi[i * n..(i + 1) * n].copy_from_slice(p.as_slice());
        }
        Ok(psi)
    }

    pub fn flow_field(&self, data: &[f64]) -> Result<Vec<f64>> {
        let (_, grad) = self.gradient(data)?;
        self.flow_field_from_gradient(data, &grad)
    }
}
