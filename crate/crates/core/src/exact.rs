//! Closed-form benchmark problems and the radial reference solution on the unit disk.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exponent::VariableExponent;
use crate::mesh::Point;

/// Exponential benchmark on `[−1, 1]²` with `f ≡ 0`.
///
/// For `b > 0` the exponent is `p(x) = 1 + 1 / s(x)` with
/// `s(x) = (b/2)(x₁ + x₂) + 1 + b`, and `u = (√2 e^{b+1} / b)(e^{(b/2)(x₁+x₂)} − 1)`,
/// whose flux `|∇u|^{p−2}∇u` is the constant `(√2 e / 2)(1, 1)`.
/// `b = 0` is the limiting case `p ≡ 2`, `u = (√2 e / 2)(x₁ + x₂)`.
#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub b: f64,
    pub exponent: VariableExponent,
}

fn benchmark_exponent(b: f64, x: Point) -> f64 {
    if b == 0.0 {
        2.0
    } else {
        1.0 + 1.0 / (0.5 * b * (x[0] + x[1]) + 1.0 + b)
    }
}

impl BenchmarkCase {
    pub fn exact_u(&self, x: Point) -> f64 {
        let b = self.b;
        let s2 = std::f64::consts::SQRT_2;
        if b == 0.0 {
            0.5 * s2 * std::f64::consts::E * (x[0] + x[1])
        } else {
            s2 * (b + 1.0).exp() / b * (0.5 * b * (x[0] + x[1])).exp_m1()
        }
    }

    pub fn exact_gradient(&self, x: Point) -> Point {
        let b = self.b;
        let c = 0.5 * std::f64::consts::SQRT_2 * (b + 1.0 + 0.5 * b * (x[0] + x[1])).exp();
        [c, c]
    }

    pub fn f(&self, _x: Point) -> f64 {
        0.0
    }

    pub fn p(&self, x: Point) -> f64 {
        benchmark_exponent(self.b, x)
    }
}

/// The exponential benchmark with parameter `b ≥ 0`.
pub fn make_benchmark(b: f64) -> Result<BenchmarkCase> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("benchmark parameter must be finite and >= 0, got {b}")));
    }
    let (p1, p2) = if b == 0.0 { (2.0, 2.0) } else { (1.0 + 1.0 / (1.0 + 2.0 * b), 2.0) };
    let exponent = VariableExponent::new(p1, p2, move |x| benchmark_exponent(b, x))?;
    Ok(BenchmarkCase { b, exponent })
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Radial profile `r ↦ value` on `[0, 1]`.
#[derive(Clone)]
pub enum RadialFn {
    Const(f64),
    /// `c₀ + c₁ r + c₂ r² + …`
    Poly(Vec<f64>),
    /// `a sin(w r)`
    Sin {
        amp: f64,
        freq: f64,
    },
    Custom {
        f: ScalarFn,
        derivative: Option<ScalarFn>,
    },
}

impl fmt::Debug for RadialFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "const:{c}"),
            Self::Poly(c) => write!(f, "poly:{c:?}"),
            Self::Sin { amp, freq } => write!(f, "sin:{amp},{freq}"),
            Self::Custom { derivative, .. } => write!(f, "custom(analytic derivative: {})", derivative.is_some()),
        }
    }
}

impl RadialFn {
    pub fn linear(a: f64, b: f64) -> Self {
        Self::Poly(vec![a, b])
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom { f: Arc::new(f), derivative: None }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::Poly(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * r + ci),
            Self::Sin { amp, freq } => amp * (freq * r).sin(),
            Self::Custom { f, .. } => f(r),
        }
    }

    /// Analytic derivative where known, otherwise a central difference with
    /// step `1e−6 · max(1, r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            Self::Const(_) => 0.0,
            Self::Poly(c) => c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &ci)| acc * r + k as f64 * ci),
            Self::Sin { amp, freq } => amp * freq * (freq * r).cos(),
            Self::Custom { derivative: Some(d), .. } => d(r),
            Self::Custom { f, derivative: None } => {
                let h = 1e-6 * r.abs().max(1.0);
                (f(r + h) - f(r - h)) / (2.0 * h)
            }
        }
    }
}

impl FromStr for RadialFn {
    type Err = Error;

    /// `const:c`, `linear:a,b`, `poly:c0,c1,...` or `sin:a,w`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let nums = params
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number '{p}' in '{s}'"))))
            .collect::<Result<Vec<f64>>>()?;
        let want = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("'{name}' takes {n} parameter(s), got {}", nums.len())))
            }
        };
        match name.trim() {
            "const" => want(1).map(|_| Self::Const(nums[0])),
            "linear" => want(2).map(|_| Self::linear(nums[0], nums[1])),
            "poly" if !nums.is_empty() => Ok(Self::Poly(nums)),
            "sin" => want(2).map(|_| Self::Sin { amp: nums[0], freq: nums[1] }),
            other => Err(Error::InvalidArgument(format!("unknown radial profile '{other}'"))),
        }
    }
}

/// Integration tolerances for the radial reference solution.
#[derive(Debug, Clone, Copy)]
pub struct RadialTolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for RadialTolerance {
    fn default() -> Self {
        Self { rel: 1e-13, abs: 1e-15 }
    }
}

/// Radial problem on the unit disk with `p(x) = P(|x|)`, `f(x) = F(|x|)` and
/// boundary value `g`. The solution profile is
/// `U(r) = g − ∫_r^1 Z |Z|^{(2−P)/(P−1)}` with `Z(r) = −(1/r)∫_0^r t F(t) dt`.
#[derive(Debug, Clone)]
pub struct RadialCase {
    exponent: RadialFn,
    source: RadialFn,
    g: f64,
    tol: RadialTolerance,
}

/// Sample radii used to screen for the degenerate case `Z(r) = 0` with `P(r) = 2`.
const SCREEN_RADII: usize = 64;
const ZERO_Z: f64 = 1e-300;

impl RadialCase {
    pub fn new(exponent: RadialFn, source: RadialFn, g: f64) -> Result<Self> {
        Self::with_tolerance(exponent, source, g, RadialTolerance::default())
    }

    pub fn with_tolerance(exponent: RadialFn, source: RadialFn, g: f64, tol: RadialTolerance) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::InvalidArgument("boundary value must be finite".into()));
        }
        let case = Self { exponent, source, g, tol };
        let mut all_zero = true;
        for i in 1..=SCREEN_RADII {
            let r = i as f64 / SCREEN_RADII as f64;
            let p = case.exponent.eval(r);
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::RadialCondition { radius: r, reason: format!("P(r) = {p} is not in (1, ∞)") });
            }
            let z = case.z(r)?;
            if z.abs() > ZERO_Z {
                all_zero = false;
            } else if p == 2.0 {
                return Err(Error::RadialCondition { radius: r, reason: "Z(r) = 0 while P(r) = 2".into() });
            }
        }
        if all_zero {
            return Err(Error::RadialCondition { radius: 1.0, reason: "Z vanishes identically (F ≡ 0)".into() });
        }
        Ok(case)
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn exponent(&self) -> &RadialFn {
        &self.exponent
    }

    pub fn source(&self) -> &RadialFn {
        &self.source
    }

    /// `∫_0^r t F(t) dt`.
    fn first_moment(&self, r: f64) -> Result<f64> {
        adaptive_simpson(|t| t * self.source.eval(t), 0.0, r, self.tol.abs * 1e-2, self.tol.rel * 1e-1)
    }

    /// `Z(r) = −(1/r) ∫_0^r t F(t) dt`, with `Z(0) = 0`.
    pub fn z(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(-self.first_moment(r)? / r)
    }

    /// `Z′(r) = −F(r) + (1/r²) ∫_0^r t F(t) dt`.
    pub fn z_prime(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(-0.5 * self.source.eval(0.0));
        }
        Ok(-self.source.eval(r) + self.first_moment(r)? / (r * r))
    }

    fn u_prime_from_z(&self, r: f64, z: f64) -> Result<f64> {
        let p = self.exponent.eval(r);
        let a = (2.0 - p) / (p - 1.0);
        if z == 0.0 {
            if a < 0.0 {
                return Err(Error::RadialCondition { radius: r, reason: format!("Z(r) = 0 with P(r) = {p} > 2") });
            }
            return Ok(0.0);
        }
        Ok(z * z.abs().powf(a))
    }

    /// `U′(r) = Z(r) |Z(r)|^{(2−P(r))/(P(r)−1)}`.
    pub fn u_prime(&self, r: f64) -> Result<f64> {
        let z = self.z(r)?;
        self.u_prime_from_z(r, z)
    }

    /// `U(r) = g − ∫_r^1 U′(t) dt`.
    pub fn u(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!("radius {r} outside [0, 1]")));
        }
        if r == 1.0 {
            return Ok(self.g);
        }
        let mut failure = None;
        let integral = adaptive_simpson(
            |t| match self.u_prime(t) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            r,
            1.0,
            self.tol.abs,
            self.tol.rel,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(self.g - integral?)
    }

    /// `U″ = Z′|Z|^a / (P−1) − |Z|^a P′ ln|Z| Z / (P−1)²` with `a = (2−P)/(P−1)`.
    /// The `Z ln|Z|` factor is continued by zero where `Z` vanishes.
    pub fn u_second(&self, r: f64) -> Result<f64> {
        let z = self.z(r)?;
        let p = self.exponent.eval(r);
        if z == 0.0 {
            if p == 2.0 {
                return self.z_prime(r);
            }
            if p > 2.0 {
                return Err(Error::RadialCondition { radius: r, reason: format!("Z(r) = 0 with P(r) = {p} > 2") });
            }
            // |Z|^a → 0 for a > 0
            return Ok(0.0);
        }
        let zp = self.z_prime(r)?;
        let dp = self.exponent.derivative(r);
        let a = (2.0 - p) / (p - 1.0);
        let za = z.abs().powf(a);
        Ok(zp * za / (p - 1.0) - za * dp * z.abs().ln() * z / ((p - 1.0) * (p - 1.0)))
    }

    /// `(U″)² |U′|^{P−2} r + |U′|^P / r`, with the `r → 0` limit 0.
    pub fn regularity_integrand(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let z = self.z(r)?;
        let up = self.u_prime_from_z(r, z)?;
        let upp = self.u_second(r)?;
        let p = self.exponent.eval(r);
        let a = up.abs();
        let first = if upp == 0.0 { 0.0 } else { upp * upp * a.powf(p - 2.0) * r };
        let v = first + a.powf(p) / r;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("regularity integrand is {v} at r = {r}")));
        }
        Ok(v)
    }

    /// `2π ∫_0^1 [(U″)² |U′|^{P−2} r + |U′|^P / r] dr`.
    pub fn regularity_integral(&self) -> Result<f64> {
        let mut failure = None;
        let v = adaptive_simpson(
            |r| match self.regularity_integrand(r) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            1.0,
            1e-14,
            1e-11,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(2.0 * std::f64::consts::PI * v?)
    }
}

pub fn radial_z(case: &RadialCase, r: f64) -> Result<f64> {
    case.z(r)
}

pub fn radial_u(case: &RadialCase, r: f64) -> Result<f64> {
    case.u(r)
}

pub fn radial_u_second(case: &RadialCase, r: f64) -> Result<f64> {
    case.u_second(r)
}

pub fn regularity_integral(case: &RadialCase) -> Result<f64> {
    case.regularity_integral()
}

/// Recursion depth cap for [`adaptive_simpson`].
pub const SIMPSON_MAX_DEPTH: u32 = 40;

/// Adaptive Simpson quadrature with Richardson correction. A panel is
/// accepted when `|S_left + S_right − S| ≤ 15 ε`, where `ε` starts at
/// `max(abs_tol, rel_tol · |S|)` and halves with depth.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // a coarse sweep stabilizes the relative target for oscillating integrands
    let eps = abs_tol.max(rel_tol * whole.abs());
    let v = simpson_step(&mut f, a, b, fa, fm, fb, whole, eps, SIMPSON_MAX_DEPTH);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("quadrature on [{a}, {b}] produced {v}")));
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return f64::NAN;
    }
    if depth == 0 || delta.abs() <= 15.0 * eps || m <= a || m >= b {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}
