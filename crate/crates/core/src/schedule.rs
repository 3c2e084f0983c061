//! Predefined stance/flight timing and its smoothed activation functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent magnitude handed to `exp` before clamping.
const EXP_LIMIT: f64 = 745.0;

/// Logistic step `1 / (1 + e^{−αc})`.
pub fn smooth_heaviside(c: f64, alpha: f64) -> f64 {
    let z = (alpha * c).clamp(-EXP_LIMIT, EXP_LIMIT);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gaussian bump used in place of the step derivative:
/// `exp(−(c/β)²) / (β √(2π))`.
pub fn smooth_heaviside_derivative(c: f64, beta: f64) -> f64 {
    let r = c / beta;
    (-(r * r)).exp() / (beta * (2.0 * std::f64::consts::PI).sqrt())
}

/// Exact derivative of [`smooth_heaviside`], written as `α H (1 − H)` so it
/// never overflows.
pub fn logistic_derivative(c: f64, alpha: f64) -> f64 {
    let h = smooth_heaviside(c, alpha);
    alpha * h * (1.0 - h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    /// Logistic sharpness for time switches.
    pub alpha: f64,
    /// Width of the Gaussian step derivative.
    pub beta: f64,
    /// Logistic sharpness of the inequality switch `H(h_j(x))`.
    pub constraint_alpha: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            alpha: 5000.0,
            beta: 0.005,
            constraint_alpha: 5000.0,
        }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::config("alpha", "must be positive"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("beta", "must be positive"));
        }
        if !(self.constraint_alpha > 0.0) {
            return Err(Error::config("constraint_alpha", "must be positive"));
        }
        Ok(())
    }
}

/// Stance intervals `[landing, takeoff]` of one leg, sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegSchedule {
    pub stance: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSchedule {
    pub horizon: f64,
    pub legs: Vec<LegSchedule>,
}

/// A maximal stance or flight interval of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub stance: bool,
    pub start: f64,
    pub end: f64,
}

impl ContactSchedule {
    pub fn new(horizon: f64, legs: Vec<LegSchedule>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidSchedule(format!("horizon {horizon} must be positive")));
        }
        for (i, leg) in legs.iter().enumerate() {
            let mut prev_end = f64::NEG_INFINITY;
            for &(a, b) in &leg.stance {
                if !(0.0 <= a && a < b && b <= horizon) {
                    return Err(Error::InvalidSchedule(format!(
                        "leg {}: interval [{a}, {b}] outside [0, {horizon}] or empty",
                        i + 1
                    )));
                }
                if a < prev_end {
                    return Err(Error::InvalidSchedule(format!(
                        "leg {}: intervals overlap or are unsorted at {a}",
                        i + 1
                    )));
                }
                prev_end = b;
            }
        }
        Ok(Self { horizon, legs })
    }

    /// Merges single-leg schedules sharing one horizon.
    pub fn stack(parts: Vec<ContactSchedule>) -> Result<Self> {
        let horizon = parts
            .first()
            .map(|p| p.horizon)
            .ok_or_else(|| Error::InvalidSchedule("no legs".into()))?;
        if parts.iter().any(|p| p.horizon != horizon) {
            return Err(Error::InvalidSchedule("legs disagree on the horizon".into()));
        }
        Self::new(horizon, parts.into_iter().flat_map(|p| p.legs).collect())
    }

    pub fn leg_count(&self) -> usize {
        self.legs.len()
    }

    /// Stance and flight phases of `leg` covering `[0, T]` in order.
    pub fn phases(&self, leg: usize) -> Vec<Phase> {
        let mut out = Vec::new();
        let mut cursor = 0.0;
        for &(a, b) in &self.legs[leg].stance {
            if a > cursor {
                out.push(Phase { stance: false, start: cursor, end: a });
            }
            out.push(Phase { stance: true, start: a, end: b });
            cursor = b;
        }
        if cursor < self.horizon {
            out.push(Phase { stance: false, start: cursor, end: self.horizon });
        }
        out
    }
}

/// Smoothed stance indicator `A_i(t) = Σ_j H(t − t¹_j) − H(t − t²_j)`.
pub fn activation(schedule: &ContactSchedule, leg: usize, t: f64, alpha: f64) -> f64 {
    schedule.legs[leg]
        .stance
        .iter()
        .map(|&(land, takeoff)| smooth_heaviside(t - land, alpha) - smooth_heaviside(t - takeoff, alpha))
        .sum()
}

/// `Ȧ_i(t)` built from the Gaussian step derivative.
pub fn activation_time_derivative(schedule: &ContactSchedule, leg: usize, t: f64, beta: f64) -> f64 {
    schedule.legs[leg]
        .stance
        .iter()
        .map(|&(land, takeoff)| {
            smooth_heaviside_derivative(t - land, beta) - smooth_heaviside_derivative(t - takeoff, beta)
        })
        .sum()
}

/// One leg alternating stance and flight phases of equal length.
///
/// `hops` flights separate `hops + 1` stances, so the leg starts and ends
/// planted; each phase lasts `T / (2 hops + 1)`. Interior switch times are
/// shifted by `offset` while the first landing stays at 0 and the last
/// stance still runs to `T`.
pub fn equal_ratio_schedule(hops: usize, horizon: f64, offset: f64) -> Result<ContactSchedule> {
    if hops == 0 {
        return Err(Error::InvalidSchedule("hops must be at least 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidSchedule(format!("horizon {horizon} must be positive")));
    }
    if !(offset.abs() < horizon) {
        return Err(Error::InvalidOffset { offset, horizon });
    }
    let phase = horizon / (2 * hops + 1) as f64;
    let mut stance = Vec::with_capacity(hops + 1);
    for j in 0..=hops {
        let land = if j == 0 { 0.0 } else { (2 * j) as f64 * phase + offset };
        let takeoff = if j == hops { horizon } else { (2 * j + 1) as f64 * phase + offset };
        let (land, takeoff) = (land.clamp(0.0, horizon), takeoff.clamp(0.0, horizon));
        if takeoff > land {
            stance.push((land, takeoff));
        }
    }
    // Shifts can push neighbouring stances together; merge them.
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(stance.len());
    for (a, b) in stance {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    ContactSchedule::new(horizon, vec![LegSchedule { stance: merged }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fig2_schedule() -> ContactSchedule {
        ContactSchedule::new(
            5.0,
            vec![LegSchedule {
                stance: vec![(0.0, 1.0), (2.0, 3.0), (4.0, 5.0)],
            }],
        )
        .unwrap()
    }

    #[test]
    fn heaviside_values() {
        assert_eq!(smooth_heaviside(0.0, 7.0), 0.5);
        assert_abs_diff_eq!(smooth_heaviside(0.1, 100.0), 1.0 / (1.0 + (-10.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(smooth_heaviside(0.1, 100.0), 0.9999546, epsilon = 1e-7);
        assert_eq!(smooth_heaviside(-1e9, 5000.0), smooth_heaviside(-1e300, 5000.0));
        assert!(smooth_heaviside(-1e9, 5000.0) < 1e-300);
        assert_eq!(smooth_heaviside(1e9, 5000.0), 1.0);
        assert!(smooth_heaviside(f64::NEG_INFINITY, 1.0).is_finite());
    }

    #[test]
    fn gaussian_derivative_values() {
        assert_abs_diff_eq!(smooth_heaviside_derivative(0.0, 0.01), 39.894228, epsilon = 1e-6);
        assert_eq!(smooth_heaviside_derivative(0.01, 0.01), smooth_heaviside_derivative(-0.01, 0.01));
        assert!(smooth_heaviside_derivative(1.0, 0.01) < 1e-300);
    }

    #[test]
    fn logistic_derivative_is_finite_for_huge_alpha() {
        assert_abs_diff_eq!(logistic_derivative(0.0, 1e6), 2.5e5, epsilon = 1e-6);
        assert_eq!(logistic_derivative(1.0, 1e6), 0.0);
        let h = 1e-7;
        let fd = (smooth_heaviside(0.3 + h, 4.0) - smooth_heaviside(0.3 - h, 4.0)) / (2.0 * h);
        assert_abs_diff_eq!(logistic_derivative(0.3, 4.0), fd, epsilon = 1e-8);
    }

    #[test]
    fn activation_follows_stance_phases() {
        let s = fig2_schedule();
        assert!(activation(&s, 0, 0.5, 5000.0) > 1.0 - 1e-9);
        assert!(activation(&s, 0, 1.5, 5000.0) < 1e-9);
        assert_abs_diff_eq!(activation(&s, 0, 3.0, 5000.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn activation_derivative_at_switches() {
        let s = fig2_schedule();
        let beta = 0.01;
        let peak = 1.0 / (beta * (2.0 * std::f64::consts::PI).sqrt());
        assert_abs_diff_eq!(activation_time_derivative(&s, 0, 0.5, beta), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(activation_time_derivative(&s, 0, 2.0, beta), peak, epsilon = 1e-9);
        assert_abs_diff_eq!(activation_time_derivative(&s, 0, 3.0, beta), -peak, epsilon = 1e-9);
    }

    fn integrate_derivative(s: &ContactSchedule, from: f64, to: f64, beta: f64) -> f64 {
        let n = 100_001;
        let dt = (to - from) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * dt * activation_time_derivative(s, 0, from + i as f64 * dt, beta)
            })
            .sum()
    }

    #[test]
    fn activation_derivative_counts_switches() {
        // Each bump carries mass ∫ exp(−(c/β)²)/(β√2π) dc = 1/√2.
        let s = fig2_schedule();
        let beta = 0.05; // shortest phase / 20
        let mass = std::f64::consts::FRAC_1_SQRT_2;
        for (from, to, net) in [(1.5, 2.5, 1.0), (0.5, 3.5, -1.0), (0.5, 4.5, 0.0), (1.5, 4.5, 1.0)] {
            let total = integrate_derivative(&s, from, to, beta);
            assert!((total - net * mass).abs() <= 0.02 * mass, "[{from}, {to}]: {total}");
        }
    }

    #[test]
    fn equal_ratio_three_hops() {
        let s = equal_ratio_schedule(3, 2.0, 0.0).unwrap();
        let d = 2.0 / 7.0;
        let expected = [(0.0, d), (2.0 * d, 3.0 * d), (4.0 * d, 5.0 * d), (6.0 * d, 2.0)];
        assert_eq!(s.legs[0].stance.len(), 4);
        for (got, want) in s.legs[0].stance.iter().zip(expected) {
            assert_abs_diff_eq!(got.0, want.0, epsilon = 1e-12);
            assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-12);
        }
        let stance_time: f64 = s.legs[0].stance.iter().map(|(a, b)| b - a).sum();
        assert_abs_diff_eq!(stance_time, 4.0 * d, epsilon = 1e-12);
    }

    #[test]
    fn equal_ratio_with_negative_offset() {
        let base = equal_ratio_schedule(3, 2.0, 0.0).unwrap();
        let s = equal_ratio_schedule(3, 2.0, -0.05).unwrap();
        let (b, o) = (&base.legs[0].stance, &s.legs[0].stance);
        assert_eq!(o[0].0, 0.0);
        assert_abs_diff_eq!(o[0].1, b[0].1 - 0.05, epsilon = 1e-12);
        for j in 1..3 {
            assert_abs_diff_eq!(o[j].0, b[j].0 - 0.05, epsilon = 1e-12);
            assert_abs_diff_eq!(o[j].1, b[j].1 - 0.05, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(o[3].0, b[3].0 - 0.05, epsilon = 1e-12);
        assert_eq!(o[3].1, 2.0);
    }

    #[test]
    fn equal_ratio_single_hop() {
        let s = equal_ratio_schedule(1, 2.0, 0.0).unwrap();
        let phases = s.phases(0);
        assert_eq!(phases.len(), 3);
        assert!(phases[0].stance && !phases[1].stance && phases[2].stance);
        assert_abs_diff_eq!(phases[1].start, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phases[1].end, 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_ratio_rejects_large_offset() {
        assert_eq!(
            equal_ratio_schedule(3, 2.0, -2.0),
            Err(Error::InvalidOffset { offset: -2.0, horizon: 2.0 })
        );
    }

    #[test]
    fn schedule_validation() {
        let bad = ContactSchedule::new(1.0, vec![LegSchedule { stance: vec![(0.5, 0.4)] }]);
        assert!(matches!(bad, Err(Error::InvalidSchedule(_))));
        let overlap = ContactSchedule::new(1.0, vec![LegSchedule { stance: vec![(0.0, 0.5), (0.4, 0.6)] }]);
        assert!(matches!(overlap, Err(Error::InvalidSchedule(_))));
    }

    proptest! {
        #[test]
        fn heaviside_is_monotone(a in -1.0..1.0f64, b in -1.0..1.0f64, alpha in 0.1..1e4f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(smooth_heaviside(lo, alpha) <= smooth_heaviside(hi, alpha));
        }

        #[test]
        fn activation_stays_in_unit_interval(t in 0.0..5.0f64, alpha in 1.0..1e4f64) {
            let a = activation(&fig2_schedule(), 0, t, alpha);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn activation_converges_to_indicator(t in 0.0..5.0f64) {
            let s = fig2_schedule();
            let dist = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|b| (t - b).abs()).fold(f64::MAX, f64::min);
            prop_assume!(dist > 1e-3);
            let indicator = if s.legs[0].stance.iter().any(|&(a, b)| a < t && t < b) { 1.0 } else { 0.0 };
            prop_assert!((activation(&s, 0, t, 1e5) - indicator).abs() < 1e-12);
        }
    }
}
