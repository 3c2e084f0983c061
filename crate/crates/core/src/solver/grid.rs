use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One boundary component: pinned to a value or left for the flow to choose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryValue {
    Fixed(f64),
    Free,
}

impl BoundaryValue {
    pub fn fixed(self) -> Option<f64> {
        match self {
            BoundaryValue::Fixed(v) => Some(v),
            BoundaryValue::Free => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub start: Vec<BoundaryValue>,
    pub end: Vec<BoundaryValue>,
}

impl BoundarySpec {
    pub fn new(start: Vec<BoundaryValue>, end: Vec<BoundaryValue>) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::config(
                "x_fin",
                format!("{} components but x_init has {}", end.len(), start.len()),
            ));
        }
        for (i, b) in start.iter().chain(&end).enumerate() {
            if let BoundaryValue::Fixed(v) = b {
                if !v.is_finite() {
                    return Err(Error::config("boundary", format!("component {i} is not finite")));
                }
            }
        }
        Ok(Self { start, end })
    }

    pub fn fully_fixed(start: &[f64], end: &[f64]) -> Result<Self> {
        Self::new(
            start.iter().map(|&v| BoundaryValue::Fixed(v)).collect(),
            end.iter().map(|&v| BoundaryValue::Fixed(v)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// Boundary condition of component `k` at node `node` of an `n_t`-node grid,
    /// or `None` for interior nodes.
    pub fn at(&self, node: usize, n_t: usize, k: usize) -> Option<BoundaryValue> {
        if node == 0 {
            Some(self.start[k])
        } else if node + 1 == n_t {
            Some(self.end[k])
        } else {
            None
        }
    }

    pub fn is_fixed(&self, node: usize, n_t: usize, k: usize) -> bool {
        matches!(self.at(node, n_t, k), Some(BoundaryValue::Fixed(_)))
    }
}

/// How the initial curve fills a component that lacks a pinned value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitHint {
    /// Free ends take this value.
    Constant(f64),
    /// Follow another component, shifted to honour this one's pinned ends.
    Track(usize),
}

/// A curve sampled on a uniform time grid; node `i` lives at `i·T/(N−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGrid {
    pub horizon: f64,
    pub n_t: usize,
    pub dim: usize,
    /// Node-major: component `k` of node `i` is `data[i·dim + k]`.
    pub data: Vec<f64>,
}

impl CurveGrid {
    pub fn new(horizon: f64, n_t: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n_t < 3 {
            return Err(Error::config("N_t", "need at least 3 nodes"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("T", "must be positive"));
        }
        if data.len() != n_t * dim {
            return Err(Error::config("grid", format!("{} values for {n_t}×{dim}", data.len())));
        }
        Ok(Self { horizon, n_t, dim, data })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_t - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        // exact at the last node
        if i + 1 == self.n_t {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|i| self.time(i)).collect()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_t).map(|i| self.data[i * self.dim + k]).collect()
    }

    pub fn max_abs_diff(&self, other: &CurveGrid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Straight-line initial curve between the boundary values.
///
/// A free end takes its hint constant, else the pinned value at the other
/// end, else zero. Tracking hints copy another component and add the linear
/// correction that restores this component's own pinned ends.
pub fn initial_curve(
    boundary: &BoundarySpec,
    hints: &[Option<InitHint>],
    n_t: usize,
    horizon: f64,
) -> Result<CurveGrid> {
    let n = boundary.dim();
    if hints.len() != n {
        return Err(Error::config("init", format!("{} hints for {n} components", hints.len())));
    }
    let mut grid = CurveGrid::new(horizon, n_t, n, vec![0.0; n_t * n])?;
    let last = (n_t - 1) as f64;
    let anchors = |k: usize| -> (f64, f64) {
        let hint = match hints[k] {
            Some(InitHint::Constant(c)) => Some(c),
            _ => None,
        };
        let (s, e) = (boundary.start[k].fixed(), boundary.end[k].fixed());
        let a = s.or(hint).or(e).unwrap_or(0.0);
        let b = e.or(hint).or(s).unwrap_or(0.0);
        (a, b)
    };
    for k in 0..n {
        let (a, b) = anchors(k);
        for i in 0..n_t {
            let r = i as f64 / last;
            grid.data[i * n + k] = a + (b - a) * r;
        }
    }
    // resolve tracking hints in dependency order; cycles are an error
    let mut done: Vec<bool> = hints.iter().map(|h| !matches!(h, Some(InitHint::Track(_)))).collect();
    for _ in 0..n {
        for k in 0..n {
            if done[k] {
                continue;
            }
            let Some(InitHint::Track(src)) = hints[k] else { unreachable!() };
            if src >= n {
                return Err(Error::config("init", format!("component {k} tracks missing component {src}")));
            }
            if !done[src] {
                continue;
            }
            let col = grid.column(src);
            let s_fix = boundary.start[k].fixed().map(|v| v - col[0]);
            let e_fix = boundary.end[k].fixed().map(|v| v - col[n_t - 1]);
            let s_off = s_fix.or(e_fix).unwrap_or(0.0);
            let e_off = e_fix.or(s_fix).unwrap_or(0.0);
            for (i, c) in col.iter().enumerate() {
                let r = i as f64 / last;
                grid.data[i * n + k] = c + s_off + (e_off - s_off) * r;
            }
            done[k] = true;
        }
    }
    if let Some(k) = done.iter().position(|d| !d) {
        return Err(Error::config("init", format!("tracking hints for component {k} form a cycle")));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use BoundaryValue::{Fixed, Free};

    #[test]
    fn straight_line_between_fixed_ends() {
        let bc = BoundarySpec::fully_fixed(&[0.0, 1.0], &[2.0, -1.0]).unwrap();
        let g = initial_curve(&bc, &[None, None], 5, 1.0).unwrap();
        assert_eq!(g.node(2), &[1.0, 0.0]);
        assert_eq!(g.time(4), 1.0);
        assert_eq!(g.dt(), 0.25);
    }

    #[test]
    fn free_ends_use_best_anchor() {
        let bc = BoundarySpec::new(vec![Free, Fixed(3.0), Free], vec![Fixed(1.0), Free, Free]).unwrap();
        let g = initial_curve(&bc, &[None, None, Some(InitHint::Constant(7.0))], 3, 1.0).unwrap();
        assert_eq!(g.column(0), vec![1.0, 1.0, 1.0]);
        assert_eq!(g.column(1), vec![3.0, 3.0, 3.0]);
        assert_eq!(g.column(2), vec![7.0, 7.0, 7.0]);
    }

    #[test]
    fn tracking_hint_follows_source() {
        let bc = BoundarySpec::new(vec![Fixed(0.0), Free, Fixed(0.5)], vec![Fixed(2.0), Free, Free]).unwrap();
        let hints = [None, Some(InitHint::Track(0)), Some(InitHint::Track(0))];
        let g = initial_curve(&bc, &hints, 5, 1.0).unwrap();
        assert_eq!(g.column(1), g.column(0));
        assert_eq!(g.column(2), vec![0.5, 1.0, 1.5, 2.0, 2.5]);
    }

    #[test]
    fn tracking_cycle_is_rejected() {
        let bc = BoundarySpec::new(vec![Free, Free], vec![Free, Free]).unwrap();
        let hints = [Some(InitHint::Track(1)), Some(InitHint::Track(0))];
        assert!(initial_curve(&bc, &hints, 5, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(CurveGrid::new(1.0, 2, 1, vec![0.0; 2]).is_err());
        assert!(CurveGrid::new(0.0, 3, 1, vec![0.0; 3]).is_err());
        assert!(CurveGrid::new(1.0, 3, 1, vec![0.0; 4]).is_err());
        assert!(BoundarySpec::fully_fixed(&[0.0], &[0.0, 1.0]).is_err());
    }
}
