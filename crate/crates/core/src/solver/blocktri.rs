//! Symmetric positive-definite block-tridiagonal systems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub block: usize,
    pub diag: Vec<DMatrix<f64>>,
    /// `lower[i]` is the block in row `i + 1`, column `i`.
    pub lower: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn zeros(nodes: usize, block: usize) -> Self {
        Self {
            block,
            diag: vec![DMatrix::zeros(block, block); nodes],
            lower: vec![DMatrix::zeros(block, block); nodes.saturating_sub(1)],
        }
    }

    pub fn nodes(&self) -> usize {
        self.diag.len()
    }

    /// Replaces row and column `(node, k)` by the identity so the unknown is
    /// pinned to whatever the right-hand side holds there.
    pub fn pin(&mut self, node: usize, k: usize) {
        let d = &mut self.diag[node];
        d.row_mut(k).fill(0.0);
        d.column_mut(k).fill(0.0);
        d[(k, k)] = 1.0;
        if node > 0 {
            self.lower[node - 1].row_mut(k).fill(0.0);
        }
        if node < self.lower.len() {
            self.lower[node].column_mut(k).fill(0.0);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let b = self.block;
        let mut y = vec![0.0; x.len()];
        for i in 0..self.nodes() {
            let xi = DVector::from_column_slice(&x[i * b..(i + 1) * b]);
            let mut yi = &self.diag[i] * &xi;
            if i > 0 {
                yi += &self.lower[i - 1] * DVector::from_column_slice(&x[(i - 1) * b..i * b]);
            }
            if i + 1 < self.nodes() {
                yi += self.lower[i].transpose() * DVector::from_column_slice(&x[(i + 1) * b..(i + 2) * b]);
            }
            y[i * b..(i + 1) * b].copy_from_slice(yi.as_slice());
        }
        y
    }

    /// Block Cholesky solve. `None` if the matrix is not positive definite.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let b = self.block;
        let nodes = self.nodes();
        let mut chol: Vec<DMatrix<f64>> = Vec::with_capacity(nodes);
        // sub[i] = lower[i] · L_i⁻ᵀ, the off-diagonal factor below L_i
        let mut sub: Vec<DMatrix<f64>> = Vec::with_capacity(nodes.saturating_sub(1));
        for i in 0..nodes {
            let mut a = self.diag[i].clone();
            if i > 0 {
                let s = &sub[i - 1];
                a -= s * s.transpose();
            }
            let l = a.cholesky()?.l();
            if i + 1 < nodes {
                // solve S Lᵀ = lower  ⇔  L Sᵀ = lowerᵀ
                let st = l.solve_lower_triangular(&self.lower[i].transpose())?;
                sub.push(st.transpose());
            }
            chol.push(l);
        }
        // forward: L y = rhs
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let mut r = DVector::from_column_slice(&rhs[i * b..(i + 1) * b]);
            if i > 0 {
                r -= &sub[i - 1] * &y[i - 1];
            }
            y.push(chol[i].solve_lower_triangular(&r)?);
        }
        // backward: Lᵀ x = y
        let mut x = vec![DVector::zeros(b); nodes];
        for i in (0..nodes).rev() {
            let mut r = y[i].clone();
            if i + 1 < nodes {
                r -= sub[i].transpose() * &x[i + 1];
            }
            x[i] = chol[i].transpose().solve_upper_triangular(&r)?;
        }
        Some(x.into_iter().flat_map(|v| v.as_slice().to_vec()).collect())
    }
}
