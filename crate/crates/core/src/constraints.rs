//! Scalar state constraints `h_j(x) = 0` / `h_j(x) ≤ 0`, their phase binding,
//! and the ζ-augmented system that accumulates signed violation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::terrain::{terrain_frame_with_jacobian, Vec2};
use crate::model::{ControlAffineSystem, RobotParams, StateLayout, Terrain};
use crate::schedule::{activation, smooth_heaviside, ContactSchedule, SmoothingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// When a constraint is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binding {
    Always,
    Stance(usize),
    Flight(usize),
}

/// Sparse gradient: `(state index, ∂h/∂x_index)` pairs.
pub type SparseGradient = Vec<(usize, f64)>;

pub trait ConstraintFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> SparseGradient;
}

#[derive(Clone)]
pub struct ConstraintSpec {
    pub id: String,
    pub kind: ConstraintKind,
    pub binding: Binding,
    /// Penalty weight `λ_j`.
    pub weight: f64,
    pub function: Arc<dyn ConstraintFunction>,
}

impl std::fmt::Debug for ConstraintSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstraintSpec")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("binding", &self.binding)
            .field("weight", &self.weight)
            .finish()
    }
}

impl ConstraintSpec {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.function.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> SparseGradient {
        self.function.gradient(x)
    }

    /// Dense copy of the gradient.
    pub fn dense_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (i, g) in self.gradient(x) {
            out[i] += g;
        }
        out
    }

    /// Amount by which `h` misses feasibility (`|h|` or `max(h, 0)`).
    pub fn violation(&self, h: f64) -> f64 {
        match self.kind {
            ConstraintKind::Equality => h.abs(),
            ConstraintKind::Inequality => h.max(0.0),
        }
    }
}

/// Phase activation `B_j(t)`.
pub fn constraint_activation(spec: &ConstraintSpec, schedule: &ContactSchedule, t: f64, alpha: f64) -> f64 {
    match spec.binding {
        Binding::Always => 1.0,
        Binding::Stance(leg) => activation(schedule, leg, t, alpha),
        Binding::Flight(leg) => 1.0 - activation(schedule, leg, t, alpha),
    }
}

/// Switch `S_j(t, x)`: `B_j` for equalities, `H(h_j(x)) B_j` for inequalities.
pub fn switch(
    spec: &ConstraintSpec,
    schedule: &ContactSchedule,
    t: f64,
    x: &[f64],
    smoothing: &SmoothingParams,
) -> f64 {
    let b = constraint_activation(spec, schedule, t, smoothing.alpha);
    match spec.kind {
        ConstraintKind::Equality => b,
        ConstraintKind::Inequality => smooth_heaviside(spec.value(x), smoothing.constraint_alpha) * b,
    }
}

fn frame(terrain: &dyn Terrain, c: Vec2) -> (Vec2, Vec2, [[f64; 2]; 2], [[f64; 2]; 2]) {
    terrain_frame_with_jacobian(terrain, c)
        .unwrap_or(([0.0, 1.0], [1.0, 0.0], [[0.0; 2]; 2], [[0.0; 2]; 2]))
}

/// `f_terr(p_i)`, or its negation (foot above ground).
struct FootHeight {
    foot: usize,
    sign: f64,
    terrain: Arc<dyn Terrain>,
}

impl ConstraintFunction for FootHeight {
    fn value(&self, x: &[f64]) -> f64 {
        self.sign * self.terrain.value([x[self.foot], x[self.foot + 1]])
    }
    fn gradient(&self, x: &[f64]) -> SparseGradient {
        let g = self.terrain.gradient([x[self.foot], x[self.foot + 1]]);
        vec![(self.foot, self.sign * g[0]), (self.foot + 1, self.sign * g[1])]
    }
}

/// `tangential · f·T(p_i) − normal · f·N(p_i)`; covers push (`0, 1`) and
/// both friction-cone faces (`±1, μ`).
struct ContactForce {
    force: usize,
    foot: usize,
    tangential: f64,
    normal: f64,
    terrain: Arc<dyn Terrain>,
}

impl ConstraintFunction for ContactForce {
    fn value(&self, x: &[f64]) -> f64 {
        let (n, t, _, _) = frame(self.terrain.as_ref(), [x[self.foot], x[self.foot + 1]]);
        let f = [x[self.force], x[self.force + 1]];
        self.tangential * (f[0] * t[0] + f[1] * t[1]) - self.normal * (f[0] * n[0] + f[1] * n[1])
    }
    fn gradient(&self, x: &[f64]) -> SparseGradient {
        let (n, t, dn, dt) = frame(self.terrain.as_ref(), [x[self.foot], x[self.foot + 1]]);
        let f = [x[self.force], x[self.force + 1]];
        let mut out = Vec::with_capacity(4);
        for i in 0..2 {
            out.push((self.force + i, self.tangential * t[i] - self.normal * n[i]));
        }
        for j in 0..2 {
            let dtj = f[0] * dt[0][j] + f[1] * dt[1][j];
            let dnj = f[0] * dn[0][j] + f[1] * dn[1][j];
            out.push((self.foot + j, self.tangential * dtj - self.normal * dnj));
        }
        out
    }
}

/// A single state component.
struct Component {
    index: usize,
}

impl ConstraintFunction for Component {
    fn value(&self, x: &[f64]) -> f64 {
        x[self.index]
    }
    fn gradient(&self, _x: &[f64]) -> SparseGradient {
        vec![(self.index, 1.0)]
    }
}

/// `|p − p_i|² − R²`.
struct Reach {
    foot: usize,
    reach: f64,
}

impl ConstraintFunction for Reach {
    fn value(&self, x: &[f64]) -> f64 {
        let dx = x[0] - x[self.foot];
        let dy = x[1] - x[self.foot + 1];
        dx * dx + dy * dy - self.reach * self.reach
    }
    fn gradient(&self, x: &[f64]) -> SparseGradient {
        let dx = x[0] - x[self.foot];
        let dy = x[1] - x[self.foot + 1];
        vec![
            (0, 2.0 * dx),
            (1, 2.0 * dy),
            (self.foot, -2.0 * dx),
            (self.foot + 1, -2.0 * dy),
        ]
    }
}

/// `(|p − p_i| − R)² − ΔR²`: keeps the foot in an annulus around the hip.
struct Annulus {
    foot: usize,
    reach: f64,
    margin: f64,
}

impl ConstraintFunction for Annulus {
    fn value(&self, x: &[f64]) -> f64 {
        let d = (x[0] - x[self.foot]).hypot(x[1] - x[self.foot + 1]);
        (d - self.reach).powi(2) - self.margin * self.margin
    }
    fn gradient(&self, x: &[f64]) -> SparseGradient {
        let dx = x[0] - x[self.foot];
        let dy = x[1] - x[self.foot + 1];
        let d = dx.hypot(dy).max(1e-12);
        let c = 2.0 * (d - self.reach) / d;
        vec![
            (0, c * dx),
            (1, c * dy),
            (self.foot, -c * dx),
            (self.foot + 1, -c * dy),
        ]
    }
}

/// `h_c − f_terr(p)`.
struct ComClearance {
    clearance: f64,
    terrain: Arc<dyn Terrain>,
}

impl ConstraintFunction for ComClearance {
    fn value(&self, x: &[f64]) -> f64 {
        self.clearance - self.terrain.value([x[0], x[1]])
    }
    fn gradient(&self, x: &[f64]) -> SparseGradient {
        let g = self.terrain.gradient([x[0], x[1]]);
        vec![(0, -g[0]), (1, -g[1])]
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// User constraint from a (value, dense gradient) function pair.
#[derive(Clone)]
pub struct FnConstraint {
    value: Arc<ValueFn>,
    gradient: Arc<GradientFn>,
}

impl FnConstraint {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }
}

impl ConstraintFunction for FnConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> SparseGradient {
        (self.gradient)(x)
            .into_iter()
            .enumerate()
            .filter(|(_, g)| *g != 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocomotionOptions {
    /// Replace the reach disc `|p − p_i| ≤ R` by the annulus
    /// `(|p − p_i| − R)² ≤ ΔR²` with this `ΔR`.
    pub torso_margin: Option<f64>,
}

/// Contact, friction, flight, reach and clearance constraints for a
/// `legs`-legged robot, all with penalty weight `weight`.
///
/// Per leg `i` (1-based in the ids): `S1_i` foot on terrain, `S2_i` push
/// only, `S3a_i`/`S3b_i` friction cone faces (stance); `F1_i`/`F2_i` zero
/// force components, `F3_i` foot above terrain (flight); `K1_i` reach
/// (always). Finally `C1`, CoM clearance.
pub fn build_locomotion_constraints(
    params: &RobotParams,
    terrain: Arc<dyn Terrain>,
    legs: usize,
    weight: f64,
    options: LocomotionOptions,
) -> Vec<ConstraintSpec> {
    use Binding::*;
    use ConstraintKind::*;
    let layout = StateLayout::new(legs);
    let mut out = Vec::with_capacity(8 * legs + 1);
    let mut push = |id: String, kind, binding, function: Arc<dyn ConstraintFunction>| {
        out.push(ConstraintSpec { id, kind, binding, weight, function });
    };
    for leg in 0..legs {
        let n = leg + 1;
        let force = layout.force(leg);
        let foot = layout.foot(leg);
        let t = || terrain.clone();
        let contact = |tangential, normal| {
            Arc::new(ContactForce { force, foot, tangential, normal, terrain: t() }) as Arc<dyn ConstraintFunction>
        };
        push(format!("S1_{n}"), Equality, Stance(leg), Arc::new(FootHeight { foot, sign: 1.0, terrain: t() }));
        push(format!("S2_{n}"), Inequality, Stance(leg), contact(0.0, 1.0));
        push(format!("S3a_{n}"), Inequality, Stance(leg), contact(1.0, params.friction));
        push(format!("S3b_{n}"), Inequality, Stance(leg), contact(-1.0, params.friction));
        push(format!("F1_{n}"), Equality, Flight(leg), Arc::new(Component { index: force }));
        push(format!("F2_{n}"), Equality, Flight(leg), Arc::new(Component { index: force + 1 }));
        push(format!("F3_{n}"), Inequality, Flight(leg), Arc::new(FootHeight { foot, sign: -1.0, terrain: t() }));
        let reach: Arc<dyn ConstraintFunction> = match options.torso_margin {
            Some(margin) => Arc::new(Annulus { foot, reach: params.reach, margin }),
            None => Arc::new(Reach { foot, reach: params.reach }),
        };
        push(format!("K1_{n}"), Inequality, Always, reach);
    }
    push(
        "C1".into(),
        Inequality,
        Always,
        Arc::new(ComClearance { clearance: params.clearance, terrain }),
    );
    out
}

/// Base system extended with one accumulator state `ζ_j` per constraint,
/// `ζ̇_j = h_j(x) S_j(t, x)`.
#[derive(Clone)]
pub struct AugmentedSystem {
    pub base: Arc<dyn ControlAffineSystem>,
    pub specs: Vec<ConstraintSpec>,
}

pub fn augment(system: Arc<dyn ControlAffineSystem>, specs: Vec<ConstraintSpec>) -> Result<AugmentedSystem> {
    if specs.is_empty() {
        return Err(Error::config("constraints", "augmentation needs at least one constraint"));
    }
    Ok(AugmentedSystem { base: system, specs })
}

impl AugmentedSystem {
    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    /// `ζ̇ = (h_j(x) S_j(t, x))_j`.
    pub fn zeta_rates(
        &self,
        t: f64,
        x: &[f64],
        schedule: &ContactSchedule,
        smoothing: &SmoothingParams,
    ) -> Vec<f64> {
        self.specs
            .iter()
            .map(|s| s.value(x) * switch(s, schedule, t, x, smoothing))
            .collect()
    }

    /// `ζ_j(t_i)` by trapezoid quadrature along a sampled trajectory.
    pub fn accumulate(
        &self,
        times: &[f64],
        states: &[Vec<f64>],
        schedule: &ContactSchedule,
        smoothing: &SmoothingParams,
    ) -> Vec<Vec<f64>> {
        let mut zeta = vec![0.0; self.specs.len()];
        let mut out = Vec::with_capacity(times.len());
        let mut prev: Option<Vec<f64>> = None;
        for (i, (&t, x)) in times.iter().zip(states).enumerate() {
            let rate = self.zeta_rates(t, x, schedule, smoothing);
            if let Some(p) = &prev {
                let dt = t - times[i - 1];
                for j in 0..zeta.len() {
                    zeta[j] += 0.5 * dt * (p[j] + rate[j]);
                }
            }
            out.push(zeta.clone());
            prev = Some(rate);
        }
        out
    }
}

impl ControlAffineSystem for AugmentedSystem {
    fn name(&self) -> String {
        format!("{} + {} accumulators", self.base.name(), self.specs.len())
    }
    fn dim(&self) -> usize {
        self.base.dim() + self.specs.len()
    }
    fn control_dim(&self) -> usize {
        self.base.control_dim() + self.specs.len()
    }
    fn drift(&self, x: &[f64]) -> DVector<f64> {
        let n = self.base.dim();
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, n).copy_from(&self.base.drift(&x[..n]));
        out
    }
    fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.base.dim();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        out.view_mut((0, 0), (n, n)).copy_from(&self.base.drift_jacobian(&x[..n]));
        out
    }
    fn control_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.base.dim();
        let m = self.base.control_dim();
        let kc = self.specs.len();
        let mut out = DMatrix::zeros(n + kc, m + kc);
        out.view_mut((0, 0), (n, m)).copy_from(&self.base.control_matrix(&x[..n]));
        out.view_mut((n, m), (kc, kc)).fill_with_identity();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Flat, LeggedSystem, Sinusoid};
    use crate::schedule::{equal_ratio_schedule, LegSchedule};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn specs(legs: usize, terrain: Arc<dyn Terrain>) -> Vec<ConstraintSpec> {
        let params = RobotParams { legs, ..RobotParams::default() };
        build_locomotion_constraints(&params, terrain, legs, 1e5, LocomotionOptions::default())
    }

    fn by_id<'a>(specs: &'a [ConstraintSpec], id: &str) -> &'a ConstraintSpec {
        specs.iter().find(|s| s.id == id).unwrap()
    }

    fn random_state(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| match i {
                0..=5 => rng.gen_range(-1.5..1.5),
                _ if (i - 6) % 4 < 2 => rng.gen_range(-20.0..20.0),
                _ => rng.gen_range(-1.0..1.0),
            })
            .collect()
    }

    #[test]
    fn constraint_counts() {
        assert_eq!(specs(1, Arc::new(Flat)).len(), 9);
        assert_eq!(specs(2, Arc::new(Flat)).len(), 17);
        let ids: Vec<_> = specs(1, Arc::new(Flat)).into_iter().map(|s| s.id).collect();
        assert_eq!(ids, ["S1_1", "S2_1", "S3a_1", "S3b_1", "F1_1", "F2_1", "F3_1", "K1_1", "C1"]);
    }

    #[test]
    fn foot_on_flat_ground_satisfies_height_equality() {
        let s = specs(1, Arc::new(Flat));
        let x = [0.0, 0.75, 0.0, 0.5, 0.0, 0.0, 3.0, 19.0, 0.0, 0.0];
        assert_eq!(by_id(&s, "S1_1").value(&x), 0.0);
        assert!(by_id(&s, "S2_1").value(&x) < 0.0);
        assert!(by_id(&s, "K1_1").value(&x) < 0.0);
        assert!(by_id(&s, "C1").value(&x) < 0.0);
    }

    #[test]
    fn activation_by_binding() {
        let sched = equal_ratio_schedule(3, 2.0, 0.0).unwrap();
        let s = specs(1, Arc::new(Flat));
        let deep_stance = 0.1;
        assert_eq!(constraint_activation(by_id(&s, "C1"), &sched, 1.234, 5000.0), 1.0);
        assert!(constraint_activation(by_id(&s, "F1_1"), &sched, deep_stance, 5000.0) < 1e-9);
        assert!(constraint_activation(by_id(&s, "S1_1"), &sched, deep_stance, 5000.0) > 1.0 - 1e-9);
    }

    #[test]
    fn switch_gates_inequalities_by_violation() {
        let sched = ContactSchedule::new(1.0, vec![]).unwrap();
        let smoothing = SmoothingParams::default();
        let ineq = ConstraintSpec {
            id: "c".into(),
            kind: ConstraintKind::Inequality,
            binding: Binding::Always,
            weight: 1.0,
            function: Arc::new(Component { index: 0 }),
        };
        assert!(switch(&ineq, &sched, 0.3, &[-0.5], &smoothing) < 1e-12);
        assert!(switch(&ineq, &sched, 0.3, &[0.5], &smoothing) > 1.0 - 1e-12);
        let eq = ConstraintSpec { kind: ConstraintKind::Equality, ..ineq };
        assert_eq!(switch(&eq, &sched, 0.3, &[-7.0], &smoothing), 1.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let sin: Arc<dyn Terrain> = Arc::new(Sinusoid { amplitude: 0.1, frequency: 4.0 * PI });
        let mut all = specs(2, sin.clone());
        let params = RobotParams { legs: 2, ..RobotParams::default() };
        all.extend(build_locomotion_constraints(
            &params,
            sin,
            2,
            1.0,
            LocomotionOptions { torso_margin: Some(0.2) },
        ));
        let h = 1e-6;
        for _ in 0..100 {
            let x = random_state(&mut rng, 14);
            for spec in &all {
                let g = spec.dense_gradient(&x);
                for k in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (spec.value(&xp) - spec.value(&xm)) / (2.0 * h);
                    let scale = fd.abs().max(g[k].abs()).max(1.0);
                    assert!((g[k] - fd).abs() <= 1e-5 * scale, "{} d/dx{k}: {} vs {fd}", spec.id, g[k]);
                }
            }
        }
    }

    #[test]
    fn cone_faces_bound_tangential_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let terrain: Arc<dyn Terrain> = Arc::new(Sinusoid { amplitude: 0.1, frequency: 4.0 * PI });
        let s = specs(1, terrain.clone());
        let (a, b) = (by_id(&s, "S3a_1"), by_id(&s, "S3b_1"));
        for _ in 0..1000 {
            let x = random_state(&mut rng, 10);
            let (n, t) = crate::model::terrain_frame(terrain.as_ref(), [x[8], x[9]]).unwrap();
            let ft = x[6] * t[0] + x[7] * t[1];
            let fnorm = x[6] * n[0] + x[7] * n[1];
            let inside = ft.abs() <= 1.0 * fnorm;
            assert_eq!(a.value(&x) <= 0.0 && b.value(&x) <= 0.0, inside);
        }
    }

    #[test]
    fn augmented_blocks() {
        let params = RobotParams::default();
        let sys: Arc<dyn ControlAffineSystem> = Arc::new(LeggedSystem::new(params));
        let aug = augment(sys.clone(), specs(1, Arc::new(Flat))).unwrap();
        assert_eq!(aug.dim(), 19);
        let x: Vec<f64> = (0..19).map(|i| i as f64 * 0.1).collect();
        let d = ControlAffineSystem::drift(&aug, &x);
        assert_eq!(d.rows(0, 10).clone_owned(), sys.drift(&x[..10]));
        assert!(d.rows(10, 9).iter().all(|&v| v == 0.0));
        let f = aug.control_matrix(&x);
        assert_eq!(f.shape(), (19, 13));
        assert_eq!(f.view((10, 4), (9, 9)).clone_owned(), DMatrix::identity(9, 9));
        assert!(f.view((0, 4), (10, 9)).iter().all(|&v| v == 0.0));
        assert!(augment(sys, vec![]).is_err());
    }

    fn grid(n: usize, t: f64) -> Vec<f64> {
        (0..n).map(|i| t * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn accumulators_vanish_on_feasible_motion() {
        let params = RobotParams::default();
        let sys: Arc<dyn ControlAffineSystem> = Arc::new(LeggedSystem::new(params));
        let sched = equal_ratio_schedule(3, 2.0, 0.0).unwrap();
        let aug = augment(sys, specs(1, Arc::new(Flat))).unwrap();
        let smoothing = SmoothingParams::default();
        let times = grid(401, 2.0);
        // Foot under the CoM, a vertical force bump inside each stance that
        // vanishes at the switch times, zero force in flight.
        let states: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                let fy = sched.legs[0]
                    .stance
                    .iter()
                    .filter(|&&(a, b)| a <= t && t <= b)
                    .map(|&(a, b)| 19.62 * (PI * (t - a) / (b - a)).sin().powi(2))
                    .sum::<f64>();
                vec![0.0, 0.75, 0.0, 0.0, 0.0, 0.0, 0.0, fy, 0.0, 0.0]
            })
            .collect();
        let zeta = aug.accumulate(&times, &states, &sched, &smoothing);
        for (j, z) in zeta.last().unwrap().iter().enumerate() {
            assert!(z.abs() < 1e-3, "{}: {z}", aug.specs[j].id);
        }
    }

    #[test]
    fn accumulator_of_constant_violation() {
        let sys: Arc<dyn ControlAffineSystem> = Arc::new(crate::model::DoubleIntegrator { dof: 1 });
        let c = 0.3;
        let spec = ConstraintSpec {
            id: "c".into(),
            kind: ConstraintKind::Inequality,
            binding: Binding::Always,
            weight: 1.0,
            function: Arc::new(Component { index: 0 }),
        };
        let aug = augment(sys, vec![spec]).unwrap();
        let sched = ContactSchedule::new(2.0, vec![]).unwrap();
        let times = grid(201, 2.0);
        let states = vec![vec![c, 0.0]; times.len()];
        let zeta = aug.accumulate(&times, &states, &sched, &SmoothingParams::default());
        assert!((zeta.last().unwrap()[0] - c * 2.0).abs() < 1e-9);
    }

    #[test]
    fn accumulator_ignores_inactive_phase() {
        let sys: Arc<dyn ControlAffineSystem> = Arc::new(crate::model::DoubleIntegrator { dof: 1 });
        let sched = ContactSchedule::new(2.0, vec![LegSchedule { stance: vec![(0.0, 2.0)] }]).unwrap();
        let spec = ConstraintSpec {
            id: "flight-only".into(),
            kind: ConstraintKind::Equality,
            binding: Binding::Flight(0),
            weight: 1.0,
            function: Arc::new(Component { index: 0 }),
        };
        let aug = augment(sys, vec![spec]).unwrap();
        let times = grid(201, 2.0);
        let states = vec![vec![50.0, 0.0]; times.len()];
        let z = aug.accumulate(&times, &states, &sched, &SmoothingParams::default());
        // Only the half-activated endpoints t = 0 and t = T leak through.
        assert!(z.last().unwrap()[0].abs() < 50.0 * 0.01);
    }

    proptest! {
        #[test]
        fn reach_is_translation_invariant(
            px in -2.0..2.0f64, py in -2.0..2.0f64, fx in -2.0..2.0f64, fy in -2.0..2.0f64,
            dx in -5.0..5.0f64, dy in -5.0..5.0f64,
        ) {
            let s = specs(1, Arc::new(Flat));
            let k1 = by_id(&s, "K1_1");
            let a = [px, py, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, fx, fy];
            let b = [px + dx, py + dy, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, fx + dx, fy + dy];
            prop_assert!((k1.value(&a) - k1.value(&b)).abs() < 1e-9);
        }
    }
}
