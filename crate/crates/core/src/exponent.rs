//! Variable exponents, modulars and Luxemburg norms of discrete fields.
//!
//! Integrands are handled as samples at the physical quadrature points of a
//! mesh (cell-major, in the order of [`QuadratureRule::physical_points`]).
//! The exponent is evaluated pointwise at those same points.

use std::fmt;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodalField, Point};
use crate::quadrature::{pairwise_sum, QuadratureRule};

/// Relative slack when checking `p1 <= p(x) <= p2`, covering rounding in
/// closed-form exponents evaluated at the points where a bound is attained.
const BOUND_SLACK: f64 = 1e-12;

/// Exponent field `p(x)` with claimed bounds `1 < p1 <= p(x) <= p2 < ∞`.
#[derive(Clone)]
pub struct VariableExponent {
    eval: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    p1: f64,
    p2: f64,
}

impl fmt::Debug for VariableExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariableExponent").field("p1", &self.p1).field("p2", &self.p2).finish()
    }
}

impl VariableExponent {
    pub fn new<F>(p1: f64, p2: f64, eval: F) -> Result<Self>
    where
        F: Fn(Point) -> f64 + Send + Sync + 'static,
    {
        if !(p1.is_finite() && p2.is_finite() && p1 > 1.0 && p1 <= p2) {
            return Err(Error::InvalidArgument(format!(
                "exponent bounds must satisfy 1 < p1 <= p2 < inf, got [{p1}, {p2}]"
            )));
        }
        Ok(Self { eval: Arc::new(eval), p1, p2 })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(p, p, move |_| p)
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    /// Evaluates `p(x)` and checks it against the claimed bounds.
    pub fn value(&self, x: Point) -> Result<f64> {
        let p = (self.eval)(x);
        if !(p.is_finite() && p >= self.p1 * (1.0 - BOUND_SLACK) && p <= self.p2 * (1.0 + BOUND_SLACK)) {
            return Err(Error::ExponentOutOfBounds { value: p, x: x[0], y: x[1], p1: self.p1, p2: self.p2 });
        }
        Ok(p)
    }

    /// Unchecked evaluation.
    pub fn raw(&self, x: Point) -> f64 {
        (self.eval)(x)
    }
}

/// Quadrature weights and exponent values at every quadrature point of a mesh.
#[derive(Debug, Clone)]
pub struct ExponentSamples {
    weights: Vec<f64>,
    exponents: Vec<f64>,
}

impl ExponentSamples {
    pub fn new(exponent: &VariableExponent, mesh: &Mesh, rule: &QuadratureRule) -> Result<Self> {
        let exponents =
            rule.physical_points(mesh).into_iter().map(|x| exponent.value(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self { weights: rule.physical_weights(mesh), exponents })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples for {} quadrature points",
                values.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `∫ (|u| / k)^{p(x)}` from samples of `|u|`.
    pub fn scaled_modular(&self, abs_values: &[f64], k: f64) -> f64 {
        let terms: Vec<f64> = abs_values
            .iter()
            .zip(self.weights.iter().zip(&self.exponents))
            .map(|(&u, (&w, &p))| if u == 0.0 { 0.0 } else { w * (u.abs() / k).powf(p) })
            .collect();
        pairwise_sum(&terms)
    }

    pub fn modular(&self, abs_values: &[f64]) -> Result<f64> {
        self.check_len(abs_values)?;
        Ok(self.scaled_modular(abs_values, 1.0))
    }

    /// Luxemburg norm `inf { k > 0 : modular(u / k) <= 1 }` by bracketing and bisection.
    pub fn luxemburg_norm(&self, abs_values: &[f64]) -> Result<f64> {
        self.check_len(abs_values)?;
        if let Some(i) = abs_values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field sample {i} is {}", abs_values[i])));
        }
        let rho = self.scaled_modular(abs_values, 1.0);
        if rho == 0.0 {
            return Ok(0.0);
        }
        let sup = abs_values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut hi = rho.max(1.0) * (1.0 + sup);
        while self.scaled_modular(abs_values, hi) >= 1.0 {
            hi *= 2.0;
        }
        let mut lo: f64 = 1.0;
        while self.scaled_modular(abs_values, lo) <= 1.0 {
            lo *= 0.5;
        }
        lo = lo.min(hi);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let r = self.scaled_modular(abs_values, mid);
            if r == 1.0 {
                break;
            }
            if r > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(mid)
    }
}

/// Modular `∫ |u|^{p(x)} dx` from samples of `|u|` at the quadrature points.
pub fn modular(abs_values: &[f64], exponent: &VariableExponent, mesh: &Mesh, rule: &QuadratureRule) -> Result<f64> {
    ExponentSamples::new(exponent, mesh, rule)?.modular(abs_values)
}

/// Luxemburg norm from samples of `|u|` at the quadrature points.
pub fn luxemburg_norm(
    abs_values: &[f64],
    exponent: &VariableExponent,
    mesh: &Mesh,
    rule: &QuadratureRule,
) -> Result<f64> {
    ExponentSamples::new(exponent, mesh, rule)?.luxemburg_norm(abs_values)
}

/// Samples of `|u|` and `|∇u|` of a P1 field at the quadrature points.
pub fn sample_field(field: &NodalField<'_>, rule: &QuadratureRule) -> (Vec<f64>, Vec<f64>) {
    let mesh = field.mesh();
    let n = mesh.num_cells() * rule.len();
    let (mut vals, mut grads) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (k, g) in field.cell_gradients().values().iter().enumerate() {
        let gn = g[0].hypot(g[1]);
        for &b in rule.points() {
            vals.push(field.value_in_cell(k, b).abs());
            grads.push(gn);
        }
    }
    (vals, grads)
}

/// `‖u‖_{p(·)} + ‖∇u‖_{p(·)}` of a P1 field.
pub fn w1p_norm(field: &NodalField<'_>, exponent: &VariableExponent, rule: &QuadratureRule) -> Result<f64> {
    let samples = ExponentSamples::new(exponent, field.mesh(), rule)?;
    let (vals, grads) = sample_field(field, rule);
    Ok(samples.luxemburg_norm(&vals)? + samples.luxemburg_norm(&grads)?)
}

/// `‖u − u_h‖_{1,p(·)}` with `u` and `∇u` evaluated exactly at the quadrature points.
pub fn w1p_error_norm<U, G>(
    field: &NodalField<'_>,
    exact: U,
    exact_gradient: G,
    exponent: &VariableExponent,
    rule: &QuadratureRule,
) -> Result<f64>
where
    U: Fn(Point) -> f64,
    G: Fn(Point) -> Point,
{
    let mesh = field.mesh();
    let samples = ExponentSamples::new(exponent, mesh, rule)?;
    let n = samples.len();
    let (mut vals, mut grads) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (k, g) in field.cell_gradients().values().iter().enumerate() {
        for &b in rule.points() {
            let x = mesh.map_point(k, b);
            vals.push((exact(x) - field.value_in_cell(k, b)).abs());
            let ge = exact_gradient(x);
            grads.push((ge[0] - g[0]).hypot(ge[1] - g[1]));
        }
    }
    Ok(samples.luxemburg_norm(&vals)? + samples.luxemburg_norm(&grads)?)
}

/// `|ξ|^{p−2} ξ`, extended by zero at the origin.
pub fn flux(xi: Point, p: f64) -> Point {
    let n = xi[0].hypot(xi[1]);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let s = n.powf(p - 2.0);
    [s * xi[0], s * xi[1]]
}

/// `(flux(ξ) − flux(η)) · (ξ − η)`, strictly positive whenever `ξ ≠ η`.
pub fn check_monotonicity(xi: Point, eta: Point, p: f64) -> f64 {
    let (a, b) = (flux(xi, p), flux(eta, p));
    (a[0] - b[0]) * (xi[0] - eta[0]) + (a[1] - b[1]) * (xi[1] - eta[1])
}

/// Largest log-Hölder quotient `|p(x) − p(y)| · ln(e + 1/|x − y|)` over vertex pairs.
#[derive(Debug, Clone, Copy)]
pub struct LogHolderReport {
    pub quotient: f64,
    pub pairs_checked: usize,
    pub exceeds_threshold: bool,
}

/// Estimates the log-Hölder constant of `p` on mesh vertices. Meshes with
/// more than `max_vertices` vertices are subsampled with a fixed stride.
pub fn log_holder_diagnostic(
    exponent: &VariableExponent,
    mesh: &Mesh,
    threshold: f64,
    max_vertices: usize,
) -> Result<LogHolderReport> {
    let stride = mesh.num_vertices().div_ceil(max_vertices.max(2));
    let pts: Vec<Point> = mesh.vertices().iter().step_by(stride.max(1)).copied().collect();
    let ps = pts.iter().map(|&x| exponent.value(x)).collect::<Result<Vec<_>>>()?;
    let mut quotient: f64 = 0.0;
    let mut pairs = 0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
            if d == 0.0 {
                continue;
            }
            quotient = quotient.max((ps[i] - ps[j]).abs() * (std::f64::consts::E + 1.0 / d).ln());
            pairs += 1;
        }
    }
    let exceeds = quotient > threshold;
    if exceeds {
        warn!("log-Hölder quotient {quotient:.4} exceeds threshold {threshold}");
    }
    Ok(LogHolderReport { quotient, pairs_checked: pairs, exceeds_threshold: exceeds })
}
