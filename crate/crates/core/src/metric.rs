//! Time-varying penalty matrix `D(t)`, metric `G = F̄⁻ᵀ D F̄⁻¹`, and the
//! penalized Lagrangian
//!
//! ```text
//! L(t, x, ẋ) = (ẋ − F_d(x))ᵀ G(t, x) (ẋ − F_d(x)) + Σ_j λ_j h_j(x)² S_j(t, x)
//! ```
//!
//! whose energy `E = ∫ L dt` the heat flow decreases.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::constraints::{constraint_activation, ConstraintKind, ConstraintSpec};
use crate::error::{Error, Result};
use crate::model::{ControlAffineSystem, StateLayout};
use crate::schedule::{
    activation, activation_time_derivative, logistic_derivative, smooth_heaviside, smooth_heaviside_derivative,
    ContactSchedule, SmoothingParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyEntry {
    Constant(f64),
    /// `1 + λ A_leg(t)`: foot velocity of `leg`, locked in stance.
    Stance { leg: usize },
}

/// Diagonal penalty `D(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub lambda: f64,
    pub entries: Vec<PenaltyEntry>,
}

impl PenaltyMatrix {
    /// `diag(λ·𝟙₆, Λ_1, …, Λ_k)` with `Λ_i = diag(1, 1, 1 + λA_i, 1 + λA_i)`.
    pub fn legged(legs: usize, lambda: f64) -> Self {
        let mut entries = vec![PenaltyEntry::Constant(lambda); 6];
        for leg in 0..legs {
            entries.extend([
                PenaltyEntry::Constant(1.0),
                PenaltyEntry::Constant(1.0),
                PenaltyEntry::Stance { leg },
                PenaltyEntry::Stance { leg },
            ]);
        }
        Self { lambda, entries }
    }

    /// `diag(λ, …, λ, 1, …, 1)` with `n − m` penalized directions.
    pub fn uniform(n: usize, m: usize, lambda: f64) -> Self {
        let mut entries = vec![PenaltyEntry::Constant(lambda); n - m];
        entries.extend(vec![PenaltyEntry::Constant(1.0); m]);
        Self { lambda, entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn diagonal(&self, t: f64, schedule: &ContactSchedule, alpha: f64) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match *e {
                PenaltyEntry::Constant(v) => v,
                PenaltyEntry::Stance { leg } => 1.0 + self.lambda * activation(schedule, leg, t, alpha),
            })
            .collect()
    }

    /// `Ḋ(t)` from the Gaussian step derivative.
    pub fn time_derivative(&self, t: f64, schedule: &ContactSchedule, beta: f64) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match *e {
                PenaltyEntry::Constant(_) => 0.0,
                PenaltyEntry::Stance { leg } => self.lambda * activation_time_derivative(schedule, leg, t, beta),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::config("lambda", "must be positive"));
        }
        for (index, e) in self.entries.iter().enumerate() {
            if let PenaltyEntry::Constant(value) = *e {
                if !(value > 0.0) {
                    return Err(Error::SingularMetric { index, value });
                }
            }
        }
        Ok(())
    }
}

/// Legged penalty matrix `D(t)` for every leg in `schedule`, as a dense matrix.
pub fn penalty_matrix(t: f64, lambda: f64, schedule: &ContactSchedule, alpha: f64) -> DMatrix<f64> {
    let d = PenaltyMatrix::legged(schedule.leg_count(), lambda).diagonal(t, schedule, alpha);
    DMatrix::from_diagonal(&DVector::from_vec(d))
}

/// How the derivative of the inequality switch `H(h)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDerivative {
    /// `α H (1 − H)`, the true derivative of the logistic.
    Exact,
    /// The Gaussian bump of width `β`.
    Gaussian,
}

/// Quadratic residual `r = D^{1/2} F̄⁻¹ (ẋ − F_d)` with `∂r/∂ẋ` and `∂r/∂x`.
pub(crate) struct Residual {
    pub r: DVector<f64>,
    pub d_xdot: DMatrix<f64>,
    pub d_x: DMatrix<f64>,
}

/// Everything needed to evaluate the penalized Lagrangian.
#[derive(Clone)]
pub struct Problem {
    pub system: Arc<dyn ControlAffineSystem>,
    pub penalty: PenaltyMatrix,
    pub constraints: Vec<ConstraintSpec>,
    pub schedule: ContactSchedule,
    pub smoothing: SmoothingParams,
}

impl Problem {
    pub fn new(
        system: Arc<dyn ControlAffineSystem>,
        penalty: PenaltyMatrix,
        constraints: Vec<ConstraintSpec>,
        schedule: ContactSchedule,
        smoothing: SmoothingParams,
    ) -> Result<Self> {
        penalty.validate()?;
        smoothing.validate()?;
        if penalty.dim() != system.dim() {
            return Err(Error::config(
                "penalty",
                format!("{} entries for a {}-state system", penalty.dim(), system.dim()),
            ));
        }
        if let Some(s) = constraints.iter().find(|s| !(s.weight > 0.0)) {
            return Err(Error::config(format!("lambda_j {}", s.id), "must be positive"));
        }
        Ok(Self {
            system,
            penalty,
            constraints,
            schedule,
            smoothing,
        })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.schedule.horizon
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.schedule.leg_count())
    }

    pub fn penalty_diagonal(&self, t: f64) -> Vec<f64> {
        self.penalty.diagonal(t, &self.schedule, self.smoothing.alpha)
    }

    /// `G(t, x) = F̄(x)⁻ᵀ D(t) F̄(x)⁻¹`.
    pub fn metric(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.penalty_diagonal(t);
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::SingularMetric { index, value });
        }
        let d = DMatrix::from_diagonal(&DVector::from_vec(d));
        if self.system.identity_frame() {
            return Ok(d);
        }
        let inv = self.system.frame_inverse(x)?;
        Ok(inv.transpose() * d * inv)
    }

    /// `(ẋ − F_d)ᵀ G (ẋ − F_d)`.
    pub fn quadratic_part(&self, t: f64, x: &[f64], xdot: &[f64]) -> f64 {
        let v = DVector::from_column_slice(xdot) - self.system.drift(x);
        let d = self.penalty_diagonal(t);
        if self.system.identity_frame() {
            return v.iter().zip(&d).map(|(vi, di)| di * vi * vi).sum();
        }
        let w = self
            .system
            .frame_inverse(x)
            .map(|inv| inv * v)
            .unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN));
        w.iter().zip(&d).map(|(wi, di)| di * wi * wi).sum()
    }

    /// `Σ_j λ_j h_j(x)² S_j(t, x)`.
    pub fn penalty_part(&self, t: f64, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|spec| {
                let h = spec.value(x);
                spec.weight * h * h * self.switch_value(spec, t, h)
            })
            .sum()
    }

    pub fn lagrangian(&self, t: f64, x: &[f64], xdot: &[f64]) -> f64 {
        self.quadratic_part(t, x, xdot) + self.penalty_part(t, x)
    }

    fn switch_value(&self, spec: &ConstraintSpec, t: f64, h: f64) -> f64 {
        let b = constraint_activation(spec, &self.schedule, t, self.smoothing.alpha);
        match spec.kind {
            ConstraintKind::Equality => b,
            ConstraintKind::Inequality => b * smooth_heaviside(h, self.smoothing.constraint_alpha),
        }
    }

    pub(crate) fn residual(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Residual> {
        let n = self.dim();
        let sqrt_d: Vec<f64> = self.penalty_diagonal(t).into_iter().map(f64::sqrt).collect();
        let v = DVector::from_column_slice(xdot) - self.system.drift(x);
        let jac = self.system.drift_jacobian(x);
        if self.system.identity_frame() {
            let r = DVector::from_fn(n, |i, _| sqrt_d[i] * v[i]);
            let d_xdot = DMatrix::from_diagonal(&DVector::from_column_slice(&sqrt_d));
            let d_x = DMatrix::from_fn(n, n, |i, k| -sqrt_d[i] * jac[(i, k)]);
            return Ok(Residual { r, d_xdot, d_x });
        }
        let inv = self.system.frame_inverse(x)?;
        let mut d_xdot = inv.clone();
        for i in 0..n {
            d_xdot.row_mut(i).scale_mut(sqrt_d[i]);
        }
        let r = &d_xdot * &v;
        let mut d_x = -(&d_xdot * &jac);
        if !self.system.constant_frame() {
            for k in 0..n {
                let col = self.system.frame_inverse_derivative(x, k)? * &v;
                for i in 0..n {
                    d_x[(i, k)] += sqrt_d[i] * col[i];
                }
            }
        }
        Ok(Residual { r, d_xdot, d_x })
    }

    /// Adds `∂/∂x Σ λ_j h_j² S_j` into `grad`, and the Gauss–Newton curvature
    /// `Σ 2 λ_j w_j ∇h_j ∇h_jᵀ` (scaled by `hess_scale`) into `hess`.
    pub(crate) fn accumulate_penalty(
        &self,
        t: f64,
        x: &[f64],
        scale: f64,
        derivative: StepDerivative,
        grad: &mut [f64],
        mut hess: Option<(&mut DMatrix<f64>, f64)>,
    ) -> f64 {
        let mut total = 0.0;
        for spec in &self.constraints {
            let b = constraint_activation(spec, &self.schedule, t, self.smoothing.alpha);
            if b == 0.0 {
                continue;
            }
            let h = spec.value(x);
            let (dvalue, weight, value) = match spec.kind {
                ConstraintKind::Equality => (2.0 * h * b, b, h * h * b),
                ConstraintKind::Inequality => {
                    let a = self.smoothing.constraint_alpha;
                    let sw = smooth_heaviside(h, a);
                    let dsw = match derivative {
                        StepDerivative::Exact => logistic_derivative(h, a),
                        StepDerivative::Gaussian => smooth_heaviside_derivative(h, self.smoothing.beta),
                    };
                    ((2.0 * h * sw + h * h * dsw) * b, sw * b, h * h * sw * b)
                }
            };
            total += spec.weight * value;
            if dvalue == 0.0 && weight == 0.0 {
                continue;
            }
            let g = spec.gradient(x);
            for &(i, gi) in &g {
                grad[i] += scale * spec.weight * dvalue * gi;
            }
            if let Some((h_mat, hs)) = hess.as_mut() {
                let c = *hs * 2.0 * spec.weight * weight;
                if c != 0.0 {
                    for &(i, gi) in &g {
                        for &(k, gk) in &g {
                            h_mat[(i, k)] += c * gi * gk;
                        }
                    }
                }
            }
        }
        total
    }

    /// Pointwise flow direction `Ψ = G⁻¹ (d/dt ∂L/∂ẋ − ∂L/∂x)`.
    ///
    /// `Ḋ` comes from the Gaussian step derivative and the inequality switch
    /// derivative likewise uses the Gaussian, so this is the continuous
    /// Euler–Lagrange operator with the smoothed steps. Needs a frame that
    /// does not depend on `x`.
    pub fn euler_lagrange_rhs(&self, t: f64, x: &[f64], xdot: &[f64], xddot: &[f64]) -> Result<DVector<f64>> {
        if !self.system.constant_frame() {
            return Err(Error::UnsupportedSystem {
                scheme: "pointwise Euler-Lagrange".into(),
            });
        }
        let n = self.dim();
        let d = self.penalty_diagonal(t);
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::SingularMetric { index, value });
        }
        let d_dot = self.penalty.time_derivative(t, &self.schedule, self.smoothing.beta);
        let inv = if self.system.identity_frame() {
            DMatrix::identity(n, n)
        } else {
            self.system.frame_inverse(x)?
        };
        let dm = DMatrix::from_diagonal(&DVector::from_vec(d));
        let g = inv.transpose() * dm * &inv;
        let g_dot = inv.transpose() * DMatrix::from_diagonal(&DVector::from_vec(d_dot)) * &inv;
        let jac = self.system.drift_jacobian(x);
        let xdot_v = DVector::from_column_slice(xdot);
        let v = &xdot_v - self.system.drift(x);
        let accel = DVector::from_column_slice(xddot) - &jac * &xdot_v;
        let mut penalty_grad = vec![0.0; n];
        self.accumulate_penalty(t, x, 1.0, StepDerivative::Gaussian, &mut penalty_grad, None);
        let rhs = 2.0 * &g * accel + 2.0 * g_dot * &v + 2.0 * jac.transpose() * (&g * &v)
            - DVector::from_vec(penalty_grad);
        g.cholesky().map(|c| c.solve(&rhs)).ok_or(Error::SingularFrame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{build_locomotion_constraints, LocomotionOptions};
    use crate::model::{DoubleIntegrator, Flat, LeggedSystem, RobotParams, Unicycle};
    use crate::schedule::equal_ratio_schedule;
    use rand::{Rng, SeedableRng};

    fn one_leg(lambda: f64) -> Problem {
        let params = RobotParams::default();
        let schedule = equal_ratio_schedule(3, 2.0, 0.0).unwrap();
        let specs = build_locomotion_constraints(&params, Arc::new(Flat), 1, lambda, LocomotionOptions::default());
        Problem::new(
            Arc::new(LeggedSystem::new(params)),
            PenaltyMatrix::legged(1, lambda),
            specs,
            schedule,
            SmoothingParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn penalty_matrix_by_phase() {
        let sched = equal_ratio_schedule(3, 2.0, 0.0).unwrap();
        let lambda = 1e5;
        let stance = penalty_matrix(0.1, lambda, &sched, 5000.0);
        let flight = penalty_matrix(0.43, lambda, &sched, 5000.0);
        for i in 0..6 {
            assert_eq!(stance[(i, i)], lambda);
        }
        assert!((stance[(8, 8)] - (1.0 + lambda)).abs() < 1e-3);
        assert!((flight[(9, 9)] - 1.0).abs() < 1e-3);
        for m in [&stance, &flight] {
            assert_eq!(m[(6, 6)], 1.0);
            assert_eq!(m[(7, 7)], 1.0);
            assert_eq!(m.clone() - DMatrix::from_diagonal(&m.diagonal()), DMatrix::zeros(10, 10));
        }
    }

    #[test]
    fn legged_metric_equals_penalty_matrix() {
        let p = one_leg(1e5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = rng.gen_range(0.0..2.0);
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-5.0..5.0)).collect();
            assert_eq!(p.metric(t, &x).unwrap(), penalty_matrix(t, 1e5, &p.schedule, 5000.0));
        }
    }

    #[test]
    fn unicycle_metric_is_spd_congruence() {
        let sched = ContactSchedule::new(1.0, vec![]).unwrap();
        let p = Problem::new(
            Arc::new(Unicycle),
            PenaltyMatrix::uniform(3, 2, 50.0),
            vec![],
            sched,
            SmoothingParams::default(),
        )
        .unwrap();
        let x = [0.1, 0.2, 0.9];
        let g = p.metric(0.3, &x).unwrap();
        let bar = Unicycle.frame(&x).unwrap();
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![50.0, 1.0, 1.0]));
        assert!((&g - &bar * d * bar.transpose()).amax() < 1e-12);
        let eig = g.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn unit_lambda_eigenvalue_bounds() {
        let sched = equal_ratio_schedule(3, 2.0, 0.0).unwrap();
        for t in [0.0, 0.2857, 0.3, 1.0, 2.0] {
            let g = penalty_matrix(t, 1.0, &sched, 5000.0);
            for e in g.symmetric_eigen().eigenvalues.iter() {
                assert!((1.0..=2.0).contains(e));
            }
        }
    }

    #[test]
    fn lagrangian_vanishes_on_drift() {
        let p = one_leg(1e5);
        // deep stance, resting on the foot with the weight carried
        let x = [0.0, 0.75, 0.0, 0.0, 0.0, 0.0, 0.0, 19.62, 0.0, 0.0];
        let xdot: Vec<f64> = p.system.drift(&x).iter().copied().collect();
        assert!(p.lagrangian(0.1, &x, &xdot).abs() < 1e-6);
    }

    #[test]
    fn lagrangian_of_flight_foot_motion_is_control_energy() {
        let p = one_leg(1e5);
        let x = [0.0, 0.75, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3];
        let mut xdot: Vec<f64> = p.system.drift(&x).iter().copied().collect();
        let u = [0.0, 0.0, 0.6, -0.8];
        for (k, uk) in u.iter().enumerate() {
            xdot[6 + k] += uk;
        }
        assert!((p.lagrangian(0.43, &x, &xdot) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn violated_inequality_penalty() {
        let p = one_leg(1e6);
        // K1 violated by h = 0.1: |p − p_1|² = 1.1
        let mut x = [0.0; 10];
        x[1] = 1.1f64.sqrt();
        x[9] = 0.0;
        let k1 = p.constraints.iter().find(|s| s.id == "K1_1").unwrap();
        let h = k1.value(&x);
        assert!((h - 0.1).abs() < 1e-12);
        let s = smooth_heaviside(h, p.smoothing.constraint_alpha);
        let contribution = k1.weight * h * h * s;
        assert!((contribution - 1e4).abs() < 1e-6);
    }

    #[test]
    fn quadratic_part_scales_quadratically() {
        let p = one_leg(1e5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let dir: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let fd = p.system.drift(&x);
            let c = rng.gen_range(0.1..3.0);
            let a: Vec<f64> = (0..10).map(|i| fd[i] + dir[i]).collect();
            let b: Vec<f64> = (0..10).map(|i| fd[i] + c * dir[i]).collect();
            let t = rng.gen_range(0.0..2.0);
            let ratio = p.quadratic_part(t, &x, &b) / p.quadratic_part(t, &x, &a);
            assert!((ratio - c * c).abs() < 1e-9 * c * c);
        }
    }

    #[test]
    fn lagrangian_is_nonnegative() {
        let p = one_leg(1e5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let xd: Vec<f64> = (0..10).map(|_| rng.gen_range(-20.0..20.0)).collect();
            assert!(p.lagrangian(rng.gen_range(0.0..2.0), &x, &xd) >= 0.0);
        }
    }

    #[test]
    fn residual_jacobians_match_differences() {
        let sched = ContactSchedule::new(1.0, vec![]).unwrap();
        let p = Problem::new(
            Arc::new(Unicycle),
            PenaltyMatrix::uniform(3, 2, 50.0),
            vec![],
            sched,
            SmoothingParams::default(),
        )
        .unwrap();
        let x = [0.3, -0.1, 0.4];
        let xd = [0.5, 0.7, -0.2];
        let res = p.residual(0.2, &x, &xd).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let col = (p.residual(0.2, &xp, &xd).unwrap().r - p.residual(0.2, &xm, &xd).unwrap().r) / (2.0 * h);
            for i in 0..3 {
                assert!((res.d_x[(i, k)] - col[i]).abs() < 1e-8);
            }
        }
        assert!((res.r.norm_squared() - p.quadratic_part(0.2, &x, &xd)).abs() < 1e-12);
    }

    #[test]
    fn straight_line_is_stationary_without_drift() {
        let sched = ContactSchedule::new(1.0, vec![]).unwrap();
        let p = Problem::new(
            Arc::new(DoubleIntegrator { dof: 1 }),
            PenaltyMatrix::uniform(2, 1, 10.0),
            vec![],
            sched,
            SmoothingParams::default(),
        )
        .unwrap();
        // q = t, q̇ = 1: admissible with u = 0 and no acceleration.
        let psi = p.euler_lagrange_rhs(0.4, &[0.4, 1.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(psi.amax() < 1e-12);
    }

    #[test]
    fn pointwise_rhs_rejects_state_dependent_frames() {
        let sched = ContactSchedule::new(1.0, vec![]).unwrap();
        let p = Problem::new(
            Arc::new(Unicycle),
            PenaltyMatrix::uniform(3, 2, 50.0),
            vec![],
            sched,
            SmoothingParams::default(),
        )
        .unwrap();
        assert!(matches!(
            p.euler_lagrange_rhs(0.0, &[0.0; 3], &[0.0; 3], &[0.0; 3]),
            Err(Error::UnsupportedSystem { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_penalty() {
        let sched = ContactSchedule::new(1.0, vec![]).unwrap();
        let mut pen = PenaltyMatrix::uniform(2, 1, 10.0);
        pen.entries[1] = PenaltyEntry::Constant(0.0);
        let r = Problem::new(
            Arc::new(DoubleIntegrator { dof: 1 }),
            pen,
            vec![],
            sched,
            SmoothingParams::default(),
        );
        assert!(matches!(r, Err(Error::SingularMetric { index: 1, .. })));
    }
}
