mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pxlap_core::dc::{eta_update, fem_residual};
use pxlap_core::mesh::interpolate;
use pxlap_core::{
    dc_iterate, make_benchmark, scalar_solve, CellVectorField, DcConfig, DcSolver, ExponentSampling, QuadratureRule,
    VariableExponent,
};

#[test]
fn scalar_solve_agrees_with_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    common::assert_checks(&[common::scalar_solve_suite(&mut rng, 10_000)]);
}

#[test]
fn scalar_solve_plug_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10_000 {
        let q = rng.gen_range(1.05..=2.0);
        let c = 10f64.powf(rng.gen_range(-8.0..4.0));
        let b = scalar_solve(q, c, 1e-14).unwrap();
        assert!(b >= 0.0);
        assert!((b.powf(q - 1.0) + b - c).abs() <= 1e-14 * c.max(1.0) * 4.0, "q {q} c {c} b {b}");
    }
}

#[test]
fn scalar_solve_with_underflowing_root() {
    // the root c^{1/(q−1)} is below the smallest normal number
    for (q, c) in [(1.003, 0.1), (1.0001, 1e-8), (1.0 + 1e-9, 0.5)] {
        let b = scalar_solve(q, c, 1e-14).unwrap();
        assert!(b.is_finite() && (0.0..=c).contains(&b));
        assert!(b < 1e-300);
    }
}

#[test]
fn eta_update_on_random_cells() {
    let mesh = common::square(4);
    let p = VariableExponent::constant(1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut r = || [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
    let lambda = CellVectorField::new(&mesh, (0..mesh.num_cells()).map(|_| r()).collect()).unwrap();
    let grad = CellVectorField::new(&mesh, (0..mesh.num_cells()).map(|_| r()).collect()).unwrap();
    let eta = eta_update(&lambda, &grad, &p, &mesh, 1e-14).unwrap();
    for ((l, g), e) in lambda.values().iter().zip(grad.values()).zip(eta.values()) {
        let v = [l[0] + g[0], l[1] + g[1]];
        let c = v[0].hypot(v[1]);
        let b = e[0].hypot(e[1]);
        assert!((b.sqrt() + b - c).abs() <= 1e-10);
        // (|η|^{p−2} + 1) η reconstructs λ + ∇u
        let s = b.powf(-0.5) + 1.0;
        assert!((s * e[0] - v[0]).abs() <= 1e-10 && (s * e[1] - v[1]).abs() <= 1e-10);
    }
}

#[test]
fn eta_vanishes_when_lambda_cancels_gradient() {
    let mesh = common::square(3);
    let p = VariableExponent::constant(1.7).unwrap();
    let grad = CellVectorField::new(&mesh, vec![[0.3, -1.2]; mesh.num_cells()]).unwrap();
    let lambda = CellVectorField::new(&mesh, vec![[-0.3, 1.2]; mesh.num_cells()]).unwrap();
    let eta = eta_update(&lambda, &grad, &p, &mesh, 1e-14).unwrap();
    assert!(eta.values().iter().all(|e| *e == [0.0, 0.0]));
}

#[test]
fn quadratic_exponent_halves_the_argument() {
    let mesh = common::square(3);
    let p = VariableExponent::constant(2.0).unwrap();
    let grad = CellVectorField::new(&mesh, vec![[1.0, 2.0]; mesh.num_cells()]).unwrap();
    let lambda = CellVectorField::new(&mesh, vec![[0.5, -0.5]; mesh.num_cells()]).unwrap();
    let eta = eta_update(&lambda, &grad, &p, &mesh, 1e-14).unwrap();
    for e in eta.values() {
        assert!((e[0] - 0.75).abs() < 1e-15 && (e[1] - 0.75).abs() < 1e-15);
    }
}

#[test]
fn lambda_identity_holds_every_iteration() {
    let mesh = common::square(9);
    for n in 1..=6 {
        let cfg = DcConfig { max_iter: n, ..DcConfig::default() };
        let (out, _) = common::run_benchmark(&mesh, 0.5, cfg);
        assert_eq!(out.state.n, n);
        let grad = out.state.u.cell_gradients();
        for (((l1, l0), g), e) in out
            .state
            .lambda
            .values()
            .iter()
            .zip(out.state.lambda_prev.values())
            .zip(grad.values())
            .zip(out.state.eta.values())
        {
            for d in 0..2 {
                assert!((l1[d] - l0[d] - (g[d] - e[d])).abs() <= 4.0 * f64::EPSILON * (1.0 + l1[d].abs()));
            }
        }
    }
}

#[test]
fn converged_run_invariants() {
    let cfg = DcConfig::default();
    for (m, b) in [(19, 0.5), (19, 1.0), (29, 0.1)] {
        let r = common::dc_run_report(m, b, cfg);
        assert!(r.converged, "m {m} b {b}");
        assert!(r.tail_monotone, "m {m} b {b}");
        assert!(r.lambda_growth < 0.1, "lambda growth {}", r.lambda_growth);
        assert!(r.energy_gap <= 1e-8, "energy gap {}", r.energy_gap);
        assert!(r.fixed_point <= 10.0 * cfg.scalar_tol, "fixed point {}", r.fixed_point);
        assert!(r.plug_back <= cfg.scalar_tol, "plug back {}", r.plug_back);
        assert!(r.fem_barycenter <= 10.0 * cfg.tol, "barycentric residual {}", r.fem_barycenter);
    }
}

#[test]
fn pointwise_residual_decays_with_refinement() {
    let cfg = DcConfig::default();
    let r: Vec<f64> = [9, 19, 39].iter().map(|&m| common::dc_run_report(m, 0.5, cfg).fem_pointwise).collect();
    for w in r.windows(2) {
        assert!(w[0] / w[1] > 8.0, "{r:?}");
    }
}

#[test]
fn interpolant_residual_decreases_under_refinement() {
    let rule = QuadratureRule::degree5();
    for b in [0.1, 1.0] {
        let case = make_benchmark(b).unwrap();
        let r: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&m| {
                let mesh = common::square(m);
                let pi = interpolate(|x| case.exact_u(x), &mesh);
                fem_residual(&pi, |_| 0.0, &case.exponent, &rule, ExponentSampling::Pointwise).unwrap()
            })
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2], "b {b}: {r:?}");
    }
}

#[test]
fn affine_case_is_reproduced() {
    let mesh = common::square(11);
    let case = make_benchmark(0.0).unwrap();
    let (out, exponent) = common::run_benchmark(&mesh, 0.0, DcConfig::default());
    assert!(out.converged);
    let pi = interpolate(|x| case.exact_u(x), &mesh);
    let diff = interpolate(|_| 0.0, &mesh);
    let coeffs: Vec<f64> = out.state.u.coefficients().iter().zip(pi.coefficients()).map(|(a, b)| a - b).collect();
    let diff = pxlap_core::NodalField::new(diff.mesh(), coeffs).unwrap();
    let err = pxlap_core::w1p_norm(&diff, &exponent, &QuadratureRule::degree5()).unwrap();
    assert!(err <= 1e-8, "error {err}");
}

#[test]
fn zero_data_gives_zero_after_one_step() {
    let mesh = common::square(6);
    let p = VariableExponent::constant(1.5).unwrap();
    let g = interpolate(|_| 0.0, &mesh);
    let out = dc_iterate(|_| 0.0, &p, &g, &DcConfig::default(), &QuadratureRule::degree5()).unwrap();
    assert!(out.converged);
    assert_eq!(out.state.n, 1);
    assert!(out.state.u.coefficients().iter().all(|&v| v == 0.0));
    assert!(out.state.eta.values().iter().all(|e| *e == [0.0, 0.0]));
}

#[test]
fn iteration_cap_flags_non_convergence() {
    let mesh = common::square(9);
    let (out, _) = common::run_benchmark(&mesh, 1.0, DcConfig { max_iter: 4, ..DcConfig::default() });
    assert!(!out.converged);
    assert_eq!(out.state.n, 4);
    assert_eq!(out.log.entries.len(), 4);
}

#[test]
fn solver_rejects_bad_configuration() {
    let mesh = common::square(4);
    let case = make_benchmark(0.5).unwrap();
    let rule = QuadratureRule::degree5();
    for cfg in [
        DcConfig { rho: 0.0, ..DcConfig::default() },
        DcConfig { rho: 1.7, ..DcConfig::default() },
        DcConfig { tol: -1.0, ..DcConfig::default() },
        DcConfig { max_iter: 0, ..DcConfig::default() },
    ] {
        assert!(DcSolver::new(&mesh, case.exponent.clone(), |_| 0.0, rule.clone(), cfg).is_err());
    }
    let high = VariableExponent::constant(2.5).unwrap();
    assert!(DcSolver::new(&mesh, high, |_| 0.0, rule, DcConfig::default()).is_err());
}

#[test]
fn convergence_log_csv() {
    let mesh = common::square(5);
    let (out, _) = common::run_benchmark(&mesh, 0.5, DcConfig::default());
    let mut buf = Vec::new();
    out.log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,residual,J_value"));
    assert_eq!(lines.count(), out.state.n);
}
