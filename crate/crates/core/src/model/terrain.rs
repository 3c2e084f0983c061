//! Terrain as the zero set of a C² height-residual function.
//!
//! Points with `f_terr > 0` lie above the ground. The outward normal is the
//! normalized gradient and the tangent is the normal rotated by −90°, so flat
//! ground gives `N = (0, 1)`, `T = (1, 0)`.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::{param_f64, Registry};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub trait Terrain: Send + Sync {
    fn name(&self) -> String;

    /// Height residual `f_terr(c_x, c_y)`.
    fn value(&self, c: Vec2) -> f64;

    fn gradient(&self, c: Vec2) -> Vec2;

    /// Second derivatives. The default differences the analytic gradient.
    fn hessian(&self, c: Vec2) -> Mat2 {
        let h = 1e-6;
        let mut out = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut cp = c;
            let mut cm = c;
            cp[j] += h;
            cm[j] -= h;
            let gp = self.gradient(cp);
            let gm = self.gradient(cm);
            for i in 0..2 {
                out[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        out
    }
}

/// `f_terr = c_y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Flat;

impl Terrain for Flat {
    fn name(&self) -> String {
        "flat".into()
    }
    fn value(&self, c: Vec2) -> f64 {
        c[1]
    }
    fn gradient(&self, _c: Vec2) -> Vec2 {
        [0.0, 1.0]
    }
    fn hessian(&self, _c: Vec2) -> Mat2 {
        [[0.0; 2]; 2]
    }
}

/// `f_terr = c_y − A cos(ω c_x)`.
#[derive(Debug, Clone, Copy)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Terrain for Sinusoid {
    fn name(&self) -> String {
        format!("sinusoid {} {}", self.amplitude, self.frequency)
    }
    fn value(&self, c: Vec2) -> f64 {
        c[1] - self.amplitude * (self.frequency * c[0]).cos()
    }
    fn gradient(&self, c: Vec2) -> Vec2 {
        let w = self.frequency;
        [self.amplitude * w * (w * c[0]).sin(), 1.0]
    }
    fn hessian(&self, c: Vec2) -> Mat2 {
        let w = self.frequency;
        [[self.amplitude * w * w * (w * c[0]).cos(), 0.0], [0.0, 0.0]]
    }
}

/// Ground profile `c_y = s(c_x)` from a natural cubic spline through sampled
/// heights, continued linearly outside the table (which keeps it C²).
#[derive(Debug, Clone)]
pub struct SplineTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
}

impl SplineTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::config("terrain", "table needs at least two (x, height) rows"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::config("terrain", "table x values must be finite and increasing"));
        }
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the natural-spline moment system.
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let c = h1 / 6.0;
                let d = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d_prime[i] - c_prime[i] * m[i + 1];
            }
        }
        Ok(Self { xs, ys, m })
    }

    /// Reads `x,height` rows (header optional) from a CSV file.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let (Some(a), Some(b)) = (rec.get(0), rec.get(1)) else {
                return Err(Error::Schema("terrain table rows need two columns".into()));
            };
            match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if xs.is_empty() => continue, // header row
                _ => return Err(Error::Schema(format!("bad terrain row `{a},{b}`"))),
            }
        }
        Self::new(xs, ys)
    }

    /// Height, slope and curvature of the ground profile at `x`.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.xs.len();
        let last = n - 1;
        if x <= self.xs[0] || x >= self.xs[last] {
            let (i, edge) = if x <= self.xs[0] { (0, 0) } else { (last - 1, last) };
            let (_, slope, _) = self.segment(i, self.xs[edge]);
            return (self.ys[edge] + slope * (x - self.xs[edge]), slope, 0.0);
        }
        let i = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(last - 1),
            Err(i) => i - 1,
        };
        self.segment(i, x)
    }

    fn segment(&self, i: usize, x: f64) -> (f64, f64, f64) {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let y = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let dy = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        let ddy = a * m0 + b * m1;
        (y, dy, ddy)
    }
}

impl Terrain for SplineTable {
    fn name(&self) -> String {
        format!("table ({} knots)", self.xs.len())
    }
    fn value(&self, c: Vec2) -> f64 {
        c[1] - self.eval(c[0]).0
    }
    fn gradient(&self, c: Vec2) -> Vec2 {
        [-self.eval(c[0]).1, 1.0]
    }
    fn hessian(&self, c: Vec2) -> Mat2 {
        [[-self.eval(c[0]).2, 0.0], [0.0, 0.0]]
    }
}

type ValueFn = dyn Fn(Vec2) -> f64 + Send + Sync;
type GradFn = dyn Fn(Vec2) -> Vec2 + Send + Sync;

/// User-supplied terrain from a (value, gradient) function pair.
#[derive(Clone)]
pub struct FnTerrain {
    label: String,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
}

impl FnTerrain {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(Vec2) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Vec2) -> Vec2 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }
}

impl Terrain for FnTerrain {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn value(&self, c: Vec2) -> f64 {
        (self.value)(c)
    }
    fn gradient(&self, c: Vec2) -> Vec2 {
        (self.gradient)(c)
    }
}

/// Unit normal and tangent of the terrain at `point`.
pub fn terrain_frame(terrain: &dyn Terrain, point: Vec2) -> Result<(Vec2, Vec2)> {
    let g = terrain.gradient(point);
    let norm = g[0].hypot(g[1]);
    if norm < 1e-12 {
        return Err(Error::ZeroGradient(point[0], point[1]));
    }
    let n = [g[0] / norm, g[1] / norm];
    Ok((n, [n[1], -n[0]]))
}

/// Normal, tangent and their Jacobians with respect to the contact point
/// (`dn[i][j] = ∂N_i/∂c_j`).
pub(crate) fn terrain_frame_with_jacobian(
    terrain: &dyn Terrain,
    point: Vec2,
) -> Result<(Vec2, Vec2, Mat2, Mat2)> {
    let (n, t) = terrain_frame(terrain, point)?;
    let g = terrain.gradient(point);
    let norm = g[0].hypot(g[1]);
    let hess = terrain.hessian(point);
    // ∂N/∂c = (I − N Nᵀ) ∇²f / |∇f|
    let mut dn = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                let proj = if i == k { 1.0 } else { 0.0 } - n[i] * n[k];
                acc += proj * hess[k][j];
            }
            dn[i][j] = acc / norm;
        }
    }
    let dt = [dn[1], [-dn[0][0], -dn[0][1]]];
    Ok((n, t, dn, dt))
}

pub fn terrain_registry() -> Registry<dyn Terrain> {
    let mut reg: Registry<dyn Terrain> = Registry::new("terrain");
    reg.register("flat", "f_terr = c_y", |_| Ok(Arc::new(Flat) as Arc<dyn Terrain>));
    reg.register(
        "sinusoid",
        "sinusoid <amplitude> <frequency>: f_terr = c_y - A cos(w c_x)",
        |p| {
            let amplitude = param_f64("sinusoid", p, 0)?;
            let frequency = param_f64("sinusoid", p, 1)?;
            if !amplitude.is_finite() || !frequency.is_finite() {
                return Err(Error::config("terrain", "sinusoid parameters must be finite"));
            }
            Ok(Arc::new(Sinusoid { amplitude, frequency }) as Arc<dyn Terrain>)
        },
    );
    reg.register("table", "table <csv>: spline through (x, height) rows", |p| {
        let path = p
            .first()
            .ok_or_else(|| Error::config("terrain", "table needs a CSV path"))?;
        Ok(Arc::new(SplineTable::from_csv(Path::new(path))?) as Arc<dyn Terrain>)
    });
    reg
}
