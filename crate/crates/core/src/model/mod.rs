//! Control-affine systems `ẋ = F_d(x) + F(x) u`, with the planar single
//! rigid-body legged robot as the main instance.

pub mod terrain;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{param_f64, Registry};

pub use terrain::{terrain_frame, terrain_registry, Flat, FnTerrain, Sinusoid, SplineTable, Terrain, Vec2};

/// Physical parameters of the single rigid-body robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub mass: f64,
    pub inertia: f64,
    pub gravity: f64,
    pub legs: usize,
    /// Maximum hip-to-foot distance.
    pub reach: f64,
    /// Minimum CoM height above the terrain.
    pub clearance: f64,
    pub friction: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass: 2.0,
            inertia: 1.0,
            gravity: 9.81,
            legs: 1,
            reach: 1.0,
            clearance: 0.3,
            friction: 1.0,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("mass", self.mass > 0.0),
            ("inertia", self.inertia > 0.0),
            ("legs", self.legs >= 1),
            ("reach", self.reach > 0.0),
            ("clearance", self.clearance >= 0.0),
            ("friction", self.friction >= 0.0),
            ("gravity", self.gravity.is_finite()),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::config(field, "out of range"));
            }
        }
        Ok(())
    }
}

/// Index map for `x = [p, θ, ṗ, θ̇, f_1, p_1, …, f_k, p_k]` (zero based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub legs: usize,
}

impl StateLayout {
    pub const COM_X: usize = 0;
    pub const COM_Y: usize = 1;
    pub const THETA: usize = 2;
    pub const VEL_X: usize = 3;
    pub const VEL_Y: usize = 4;
    pub const OMEGA: usize = 5;

    pub fn new(legs: usize) -> Self {
        Self { legs }
    }
    pub fn dim(&self) -> usize {
        6 + 4 * self.legs
    }
    pub fn control_dim(&self) -> usize {
        4 * self.legs
    }
    /// First index of leg `i`'s contact force `f_i`.
    pub fn force(&self, leg: usize) -> usize {
        debug_assert!(leg < self.legs);
        6 + 4 * leg
    }
    /// First index of leg `i`'s foot position `p_i`.
    pub fn foot(&self, leg: usize) -> usize {
        self.force(leg) + 2
    }

    /// Human-readable column names, in state order.
    pub fn state_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["px", "py", "theta", "vx", "vy", "omega"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 1..=self.legs {
            for s in ["fx", "fy", "px", "py"] {
                names.push(format!("{s}{i}"));
            }
        }
        names
    }

    pub fn control_names(&self) -> Vec<String> {
        (1..=self.legs)
            .flat_map(|i| ["ux", "uy", "vx", "vy"].map(|s| format!("{s}{i}")))
            .collect()
    }
}

pub fn cross2d(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - b[0] * a[1]
}

/// Single rigid-body drift: kinematics, Newton–Euler accelerations, and zero
/// rows for the force and foot states.
pub fn drift(x: &[f64], params: &RobotParams) -> DVector<f64> {
    let layout = StateLayout::new(params.legs);
    let mut out = DVector::zeros(layout.dim());
    out[0] = x[3];
    out[1] = x[4];
    out[2] = x[5];
    let p = [x[0], x[1]];
    let mut force = [0.0, 0.0];
    let mut torque = 0.0;
    for leg in 0..params.legs {
        let fi = layout.force(leg);
        let pi = layout.foot(leg);
        let f = [x[fi], x[fi + 1]];
        force[0] += f[0];
        force[1] += f[1];
        torque += cross2d(f, [p[0] - x[pi], p[1] - x[pi + 1]]);
    }
    out[3] = force[0] / params.mass;
    out[4] = force[1] / params.mass - params.gravity;
    out[5] = torque / params.inertia;
    out
}

/// Analytic Jacobian of [`drift`].
pub fn drift_jacobian(x: &[f64], params: &RobotParams) -> DMatrix<f64> {
    let layout = StateLayout::new(params.legs);
    let n = layout.dim();
    let mut j = DMatrix::zeros(n, n);
    j[(0, 3)] = 1.0;
    j[(1, 4)] = 1.0;
    j[(2, 5)] = 1.0;
    let inv_m = 1.0 / params.mass;
    let inv_i = 1.0 / params.inertia;
    for leg in 0..params.legs {
        let fi = layout.force(leg);
        let pi = layout.foot(leg);
        let (fx, fy) = (x[fi], x[fi + 1]);
        let (rx, ry) = (x[0] - x[pi], x[1] - x[pi + 1]);
        j[(3, fi)] = inv_m;
        j[(4, fi + 1)] = inv_m;
        // τ = f_x r_y − f_y r_x
        j[(5, fi)] = ry * inv_i;
        j[(5, fi + 1)] = -rx * inv_i;
        j[(5, 0)] -= fy * inv_i;
        j[(5, 1)] += fx * inv_i;
        j[(5, pi)] = fy * inv_i;
        j[(5, pi + 1)] = -fx * inv_i;
    }
    j
}

/// `[O_{6×4k}; I_{4k}]`.
pub fn control_matrix(legs: usize) -> DMatrix<f64> {
    let layout = StateLayout::new(legs);
    let m = layout.control_dim();
    let mut f = DMatrix::zeros(layout.dim(), m);
    for c in 0..m {
        f[(6 + c, c)] = 1.0;
    }
    f
}

/// Orthonormal basis of the orthogonal complement of `span(F)`, built by
/// Gram–Schmidt over the standard basis.
pub fn gram_schmidt_completion(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = f.shape();
    let scale = f.amax().max(1.0);
    let tol = 1e-10 * scale;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    for c in 0..m {
        let mut v = f.column(c).clone_owned();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= tol {
            return Err(Error::RankDeficient {
                rank: basis.len(),
                expected: m,
            });
        }
        basis.push(v / norm);
    }
    let mut completion = Vec::with_capacity(n - m);
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            let q = v / norm;
            completion.push(q.clone());
            basis.push(q);
        }
    }
    Ok(DMatrix::from_columns(&completion))
}

/// A system `ẋ = F_d(x) + F(x) u` together with its frame `F̄ = [F_c | F]`.
pub trait ControlAffineSystem: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn drift(&self, x: &[f64]) -> DVector<f64>;
    fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    fn control_matrix(&self, x: &[f64]) -> DMatrix<f64>;

    /// Unactuated directions `F_c(x)`.
    fn completion(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        gram_schmidt_completion(&self.control_matrix(x))
    }

    fn frame(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let fc = self.completion(x)?;
        let f = self.control_matrix(x);
        let n = self.dim();
        let mut bar = DMatrix::zeros(n, n);
        bar.columns_mut(0, fc.ncols()).copy_from(&fc);
        bar.columns_mut(fc.ncols(), f.ncols()).copy_from(&f);
        Ok(bar)
    }

    fn frame_inverse(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.frame(x)?.try_inverse().ok_or(Error::SingularFrame)
    }

    /// True when `F̄` is the identity for every state.
    fn identity_frame(&self) -> bool {
        false
    }

    /// True when `F̄` does not depend on the state.
    fn constant_frame(&self) -> bool {
        self.identity_frame()
    }

    /// `∂F̄⁻¹/∂x_k`. The default differences [`Self::frame_inverse`].
    fn frame_inverse_derivative(&self, x: &[f64], k: usize) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if self.constant_frame() {
            return Ok(DMatrix::zeros(n, n));
        }
        let h = 1e-6 * x[k].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        Ok((self.frame_inverse(&xp)? - self.frame_inverse(&xm)?) / (2.0 * h))
    }
}

/// The planar single rigid-body legged robot.
#[derive(Debug, Clone)]
pub struct LeggedSystem {
    pub params: RobotParams,
    pub layout: StateLayout,
}

impl LeggedSystem {
    pub fn new(params: RobotParams) -> Self {
        Self {
            params,
            layout: StateLayout::new(params.legs),
        }
    }
}

impl ControlAffineSystem for LeggedSystem {
    fn name(&self) -> String {
        format!("legged ({} legs)", self.params.legs)
    }
    fn dim(&self) -> usize {
        self.layout.dim()
    }
    fn control_dim(&self) -> usize {
        self.layout.control_dim()
    }
    fn drift(&self, x: &[f64]) -> DVector<f64> {
        drift(x, &self.params)
    }
    fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        drift_jacobian(x, &self.params)
    }
    fn control_matrix(&self, _x: &[f64]) -> DMatrix<f64> {
        control_matrix(self.params.legs)
    }
    fn frame_inverse(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim(), self.dim()))
    }
    fn identity_frame(&self) -> bool {
        true
    }
}

/// Kinematic unicycle `(x, y, θ)` driven by forward speed and turn rate.
/// Driftless; the lateral direction is unactuated.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unicycle;

impl ControlAffineSystem for Unicycle {
    fn name(&self) -> String {
        "unicycle".into()
    }
    fn dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn drift(&self, _x: &[f64]) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn drift_jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }
    fn control_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let (s, c) = x[2].sin_cos();
        DMatrix::from_row_slice(3, 2, &[c, 0.0, s, 0.0, 0.0, 1.0])
    }
    fn completion(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (s, c) = x[2].sin_cos();
        Ok(DMatrix::from_column_slice(3, 1, &[-s, c, 0.0]))
    }
    // F̄ is a rotation, so F̄⁻¹ = F̄ᵀ.
    fn frame_inverse(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.frame(x)?.transpose())
    }
    fn frame_inverse_derivative(&self, x: &[f64], k: usize) -> Result<DMatrix<f64>> {
        if k != 2 {
            return Ok(DMatrix::zeros(3, 3));
        }
        let (s, c) = x[2].sin_cos();
        Ok(DMatrix::from_row_slice(
            3,
            3,
            &[-c, -s, 0.0, -s, c, 0.0, 0.0, 0.0, 0.0],
        ))
    }
}

/// `q̈ = u` in `dof` dimensions, state `(q, q̇)`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleIntegrator {
    pub dof: usize,
}

impl ControlAffineSystem for DoubleIntegrator {
    fn name(&self) -> String {
        format!("double-integrator ({})", self.dof)
    }
    fn dim(&self) -> usize {
        2 * self.dof
    }
    fn control_dim(&self) -> usize {
        self.dof
    }
    fn drift(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.dof {
            out[i] = x[self.dof + i];
        }
        out
    }
    fn drift_jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.dof {
            j[(i, self.dof + i)] = 1.0;
        }
        j
    }
    fn control_matrix(&self, _x: &[f64]) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.dim(), self.dof);
        for i in 0..self.dof {
            f[(self.dof + i, i)] = 1.0;
        }
        f
    }
    fn frame_inverse(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim(), self.dim()))
    }
    fn identity_frame(&self) -> bool {
        true
    }
}

pub fn system_registry() -> Registry<dyn ControlAffineSystem> {
    let mut reg: Registry<dyn ControlAffineSystem> = Registry::new("system");
    reg.register("legged", "legged <legs>: single rigid body with default parameters", |p| {
        let legs = param_f64("legged", p, 0).unwrap_or(1.0);
        if legs < 1.0 || legs.fract() != 0.0 {
            return Err(Error::config("legs", "must be a positive integer"));
        }
        let params = RobotParams {
            legs: legs as usize,
            ..RobotParams::default()
        };
        Ok(Arc::new(LeggedSystem::new(params)) as Arc<dyn ControlAffineSystem>)
    });
    reg.register("unicycle", "driftless kinematic unicycle", |_| {
        Ok(Arc::new(Unicycle) as Arc<dyn ControlAffineSystem>)
    });
    reg.register("double-integrator", "double-integrator <dof>", |p| {
        let dof = param_f64("double-integrator", p, 0).unwrap_or(1.0);
        if dof < 1.0 || dof.fract() != 0.0 {
            return Err(Error::config("dof", "must be a positive integer"));
        }
        Ok(Arc::new(DoubleIntegrator { dof: dof as usize }) as Arc<dyn ControlAffineSystem>)
    });
    reg
}
