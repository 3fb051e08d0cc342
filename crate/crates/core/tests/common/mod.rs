#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use pxlap_core::dc::{energy, eta_update, fem_residual};
use pxlap_core::exact::RadialTolerance;
use pxlap_core::exponent::{check_monotonicity, ExponentSamples};
use pxlap_core::mesh::interpolate;
use pxlap_core::{
    make_benchmark, scalar_solve, DcConfig, DcOutcome, DcSolver, ExponentSampling, Interval, Mesh, QuadratureRule,
    RadialCase, RadialFn, VariableExponent,
};

pub fn square(m: usize) -> Mesh {
    Mesh::uniform_rect(Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0), m).unwrap()
}

/// Outcome of one property check: the worst value seen against its bound.
#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn at_most(name: &str, worst: f64, bound: f64) -> Self {
        Self { pass: worst <= bound, detail: format!("{name}: worst {worst:.3e} (bound {bound:.1e})") }
    }

    pub fn flag(name: &str, ok: bool, detail: String) -> Self {
        Self { pass: ok, detail: format!("{name}: {detail}") }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

pub fn assert_checks(checks: &[Check]) {
    for c in checks {
        assert!(c.pass, "{}", c.detail);
    }
}

/// Smooth variable exponent on `[−1, 1]²` with values in `[1.3, 1.9]`.
pub fn test_exponent() -> VariableExponent {
    VariableExponent::new(1.3, 1.9, |x| 1.6 + 0.15 * (x[0] + x[1]) + 0.05 * (3.0 * x[0]).sin() * x[1].cos()).unwrap()
}

/// Samples of a random piecewise-constant field at every quadrature point.
pub fn random_cell_field(rng: &mut ChaCha8Rng, mesh: &Mesh, rule: &QuadratureRule) -> Vec<f64> {
    let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
    let mut out = Vec::with_capacity(mesh.num_cells() * rule.len());
    for _ in 0..mesh.num_cells() {
        let v = if rng.gen_bool(0.1) { 0.0 } else { scale * rng.gen_range(0.0..1.0) };
        out.extend(std::iter::repeat_n(v, rule.len()));
    }
    if out.iter().all(|&v| v == 0.0) {
        out[0] = scale;
    }
    out
}

/// Unit ball, homogeneity and the modular sandwich on `n` random fields.
pub fn luxemburg_suite(rng: &mut ChaCha8Rng, n: usize) -> Vec<Check> {
    let mesh = square(6);
    let rule = QuadratureRule::degree5();
    let p = test_exponent();
    let samples = ExponentSamples::new(&p, &mesh, &rule).unwrap();
    let (mut unit, mut homog, mut sandwich_ok) = (0.0f64, 0.0f64, true);
    for _ in 0..n {
        let u = random_cell_field(rng, &mesh, &rule);
        let k = samples.luxemburg_norm(&u).unwrap();
        unit = unit.max((samples.scaled_modular(&u, k) - 1.0).abs());

        let t = 10f64.powf(rng.gen_range(-2.0..2.0));
        let tu: Vec<f64> = u.iter().map(|v| t * v).collect();
        let kt = samples.luxemburg_norm(&tu).unwrap();
        homog = homog.max((kt - t * k).abs() / (t * k));

        let rho = samples.modular(&u).unwrap();
        let (a, b) = (rho.powf(1.0 / p.p1()), rho.powf(1.0 / p.p2()));
        let slack = 1e-12 * a.max(b);
        sandwich_ok &= a.min(b) - slack <= k && k <= a.max(b) + slack;
    }
    vec![
        Check::at_most("unit ball |rho(u/|u|) - 1|", unit, 1e-10),
        Check::at_most("homogeneity relative", homog, 1e-10),
        Check::flag("modular sandwich", sandwich_ok, format!("{n} fields")),
    ]
}

/// `‖u‖ = ϱ(u)^{1/c}` for constant exponents.
pub fn constant_exponent_suite(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let mesh = square(5);
    let rule = QuadratureRule::degree5();
    let mut worst = 0.0f64;
    for c in [1.2, 1.5, 2.0] {
        let p = VariableExponent::constant(c).unwrap();
        let samples = ExponentSamples::new(&p, &mesh, &rule).unwrap();
        for _ in 0..n {
            let u = random_cell_field(rng, &mesh, &rule);
            let k = samples.luxemburg_norm(&u).unwrap();
            let expect = samples.modular(&u).unwrap().powf(1.0 / c);
            worst = worst.max((k - expect).abs() / expect);
        }
    }
    Check::at_most("constant exponent relative", worst, 1e-10)
}

pub fn monotonicity_suite(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let mut min = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..n {
        let p = rng.gen_range(1.0001..=2.0);
        let s = 10f64.powf(rng.gen_range(-4.0..2.0));
        let xi = [s * rng.gen_range(-1.0..1.0), s * rng.gen_range(-1.0..1.0)];
        let eta = [s * rng.gen_range(-1.0..1.0), s * rng.gen_range(-1.0..1.0)];
        if xi == eta {
            continue;
        }
        let v = check_monotonicity(xi, eta, p);
        if v.is_nan() || v <= 0.0 {
            failures += 1;
        }
        min = min.min(v);
    }
    Check::flag("monotonicity", failures == 0, format!("{failures} non-positive of {n}, min {min:.3e}"))
}

/// Reference root of `b^{q−1} + b = c` by 80 bisection steps on `[0, c]`.
pub fn bisection_root(q: f64, c: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, c);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid.powf(q - 1.0) + mid > c {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn scalar_solve_suite(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let mut worst = 0.0f64;
    for i in 0..n {
        let q = if i % 50 == 0 { 2.0 } else { 2.0 - rng.gen_range(0.0..1.0f64) * 0.999_999 };
        let c = if i % 97 == 0 { 0.0 } else { rng.gen_range(0.0..=10.0) };
        let b = scalar_solve(q, c, 1e-14).unwrap();
        worst = worst.max((b - bisection_root(q, c)).abs());
    }
    Check::at_most("scalar_solve vs bisection", worst, 1e-12)
}

pub fn run_benchmark(mesh: &Mesh, b: f64, config: DcConfig) -> (DcOutcome<'_>, VariableExponent) {
    let case = make_benchmark(b).unwrap();
    let g = interpolate(|x| case.exact_u(x), mesh);
    let solver = DcSolver::new(mesh, case.exponent.clone(), |_| 0.0, QuadratureRule::degree5(), config).unwrap();
    (solver.run(&g).unwrap(), case.exponent)
}

/// Invariants of one converged benchmark run.
pub struct DcRunReport {
    pub converged: bool,
    pub iterations: usize,
    pub lambda_identity: f64,
    pub tail_monotone: bool,
    /// Largest ratio of consecutive residuals over the last ten iterations.
    pub tail_max_ratio: f64,
    pub lambda_growth: f64,
    pub energy_gap: f64,
    pub fixed_point: f64,
    pub plug_back: f64,
    pub fem_pointwise: f64,
    pub fem_barycenter: f64,
}

pub fn dc_run_report(m: usize, b: f64, config: DcConfig) -> DcRunReport {
    let mesh = square(m);
    let (out, exponent) = run_benchmark(&mesh, b, config);
    let rule = QuadratureRule::degree5();
    let s = &out.state;
    let grad = s.u.cell_gradients();

    let mut lambda_identity = 0.0f64;
    for (((l1, l0), g), e) in
        s.lambda.values().iter().zip(s.lambda_prev.values()).zip(grad.values()).zip(s.eta.values())
    {
        for d in 0..2 {
            lambda_identity = lambda_identity.max((l1[d] - l0[d] - (g[d] - e[d])).abs());
        }
    }

    let res: Vec<f64> = out.log.residuals().collect();
    let tail = &res[res.len().saturating_sub(10)..];
    let tail_monotone = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6));
    let tail_max_ratio = tail.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);

    let lmax: Vec<f64> = out.log.entries.iter().map(|e| e.lambda_max).collect();
    let lambda_growth = if lmax.len() > 20 {
        let after = lmax[19];
        lmax[19..].iter().fold(0.0f64, |a, &v| a.max(v)) / after - 1.0
    } else {
        0.0
    };

    let case = make_benchmark(b).unwrap();
    let pi = interpolate(|x| case.exact_u(x), &mesh);
    let j_final = energy(&s.u, |_| 0.0, &exponent, &rule).unwrap();
    let j_pi = energy(&pi, |_| 0.0, &exponent, &rule).unwrap();

    let again = eta_update(&s.lambda_prev, &grad, &exponent, &mesh, config.scalar_tol).unwrap();
    let fixed_point = again
        .values()
        .iter()
        .zip(s.eta.values())
        .map(|(a, e)| (a[0] - e[0]).abs().max((a[1] - e[1]).abs()))
        .fold(0.0, f64::max);

    let mut plug_back = 0.0f64;
    for (k, geo) in mesh.cells().iter().enumerate() {
        let q = exponent.value(geo.barycenter).unwrap();
        let l = s.lambda_prev.values()[k];
        let g = grad.values()[k];
        let c = (l[0] + g[0]).hypot(l[1] + g[1]);
        let e = s.eta.values()[k];
        let bv = e[0].hypot(e[1]);
        if c > 0.0 {
            plug_back = plug_back.max((bv.powf(q - 1.0) + bv - c).abs() / c.max(1.0));
        }
    }

    DcRunReport {
        converged: out.converged,
        iterations: s.n,
        lambda_identity,
        tail_monotone,
        tail_max_ratio,
        lambda_growth,
        energy_gap: j_final - j_pi,
        fixed_point,
        plug_back,
        fem_pointwise: fem_residual(&s.u, |_| 0.0, &exponent, &rule, ExponentSampling::Pointwise).unwrap(),
        fem_barycenter: fem_residual(&s.u, |_| 0.0, &exponent, &rule, ExponentSampling::Barycenter).unwrap(),
    }
}

/// Central second difference of `U` with step `h`.
pub fn fd_second(case: &RadialCase, r: f64, h: f64) -> f64 {
    (case.u(r + h).unwrap() - 2.0 * case.u(r).unwrap() + case.u(r - h).unwrap()) / (h * h)
}

/// Max relative disagreement between `U″` and a finite difference of `U` over interior radii.
pub fn u_second_vs_fd(case: &RadialCase) -> f64 {
    let mut worst = 0.0f64;
    for i in 1..=9 {
        let r = 0.1 * i as f64;
        let exact = case.u_second(r).unwrap();
        let fd = fd_second(case, r, 1e-3);
        worst = worst.max((exact - fd).abs() / exact.abs().max(1e-3));
    }
    worst
}

/// Max relative error of `|U′|^{P−1} = |Z|` at `n` random radii.
pub fn flux_identity(case: &RadialCase, rng: &mut ChaCha8Rng, n: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..n {
        let r: f64 = rng.gen_range(0.01..1.0);
        let lhs = case.u_prime(r).unwrap().abs().powf(case.exponent().eval(r) - 1.0);
        let z = case.z(r).unwrap().abs();
        worst = worst.max((lhs - z).abs() / z);
    }
    worst
}

pub fn nonconstant_radial_cases() -> Vec<RadialCase> {
    vec![
        RadialCase::new(RadialFn::linear(1.5, 0.2), RadialFn::Const(-1.0), 0.0).unwrap(),
        RadialCase::with_tolerance(
            RadialFn::Poly(vec![1.8, 0.0, -0.3]),
            RadialFn::linear(-1.0, -1.0),
            0.5,
            RadialTolerance::default(),
        )
        .unwrap(),
    ]
}
