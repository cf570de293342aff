use std::f64::consts::PI;

use nonlocal_bvp::expr::Expr;
use nonlocal_bvp::fem::{basis_solutions, capacity_fem, solve_dirichlet, CoefficientField, VectorField};
use nonlocal_bvp::geometry::annulus_mesh;
use nonlocal_bvp::nonlocal::{build_system, check_sufficient_conditions};
use nonlocal_bvp::pipeline::{evaluate, Engine};
use nonlocal_bvp::radial::{self, adaptive_simpson, critical_c0, s0_set};
use nonlocal_bvp::sweep::{refine_root, Bracket};
use nonlocal_bvp::verify::example2_problem;
use proptest::prelude::*;

fn radial_coefficients(alpha: f64, h: f64) -> CoefficientField {
    CoefficientField::new(
        VectorField::Radial {
            alpha: Expr::constant(alpha),
        },
        Expr::constant(h),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refined_roots_beat_their_bracket(k in 0usize..3, left in 0.01f64..0.3, right in 0.01f64..0.3, tol in 1e-10f64..1e-4) {
        let root = s0_set(3)[k];
        let problem = example2_problem(critical_c0(), [0.0, 1.0], true);
        let r = refine_root(&problem, Bracket { lo: root - left, hi: root + right }, tol, Engine::Oracle).unwrap();
        prop_assert!(r.det.abs() <= r.det_lo.abs());
        prop_assert!(r.det.abs() <= r.det_hi.abs());
        prop_assert!(r.lo <= r.lambda && r.lambda <= r.hi);
    }

    #[test]
    fn small_weights_keep_det_positive(c0 in -4.0f64..4.0, lambda in 1.05f64..8.0) {
        let mass = adaptive_simpson(&|r| 2.0 * PI * r * radial::example2_weight(r, c0).abs(), 1.0, lambda, 1e-12);
        prop_assume!(mass <= 1.0);
        let det = evaluate(&example2_problem(c0, [0.0, 1.0], true), lambda, Engine::Oracle).unwrap().system.det;
        prop_assert!(det > 0.0, "det {det} with mass {mass}");
    }

    #[test]
    fn discrete_maximum_principle(alpha in -1.0f64..1.0, h in 0.3f64..3.0, d0 in 0.0f64..1.0, d1 in 0.0f64..1.0, r2 in 1.5f64..4.0) {
        prop_assume!(alpha * alpha < 4.0 * h);
        let mesh = annulus_mesh(1.0, r2, 8, 32, 0).unwrap();
        let u = solve_dirichlet(&mesh, &radial_coefficients(alpha, h), 1.0, &[d0, d1]).unwrap();
        for &v in u.values() {
            prop_assert!((-1e-8..=1.0 + 1e-8).contains(&v), "{v}");
        }
    }

    #[test]
    fn dirichlet_solve_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, alpha in -1.0f64..1.0) {
        let mesh = annulus_mesh(1.0, 2.5, 6, 24, 0).unwrap();
        let c = radial_coefficients(alpha, 1.0);
        let u1 = solve_dirichlet(&mesh, &c, 1.0, &[1.0, 0.3]).unwrap();
        let u2 = solve_dirichlet(&mesh, &c, 1.0, &[-0.4, 1.0]).unwrap();
        let u = solve_dirichlet(&mesh, &c, 1.0, &[a - 0.4 * b, 0.3 * a + b]).unwrap();
        for i in 0..mesh.node_count() {
            let want = a * u1.values()[i] + b * u2.values()[i];
            prop_assert!((u.values()[i] - want).abs() <= 1e-11 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn smallness_condition_forces_positive_det(
        c_o in -1.0f64..1.0, c_i in -1.0f64..1.0, beta in 0.0f64..1.0, target in 0.01f64..1.0, lambda in 1.5f64..5.0,
    ) {
        let mesh = annulus_mesh(1.0, lambda, 6, 24, 0).unwrap();
        let raw = [format!("{c_o:?} * exp(-{beta:?} * r) * (1 + 0.5 * x / r)"), format!("{c_i:?} * cos(r)")];
        let unit: Vec<Expr> = raw.iter().map(|t| t.parse().unwrap()).collect();
        let total = check_sufficient_conditions(&mesh, &unit, lambda).unwrap().abs_integral;
        prop_assume!(total > 1e-6);
        let weights: Vec<Expr> = raw.iter().map(|t| format!("{:?} * ({t})", target / total).parse().unwrap()).collect();
        let basis = basis_solutions(&mesh, &CoefficientField::unit_radial_drift(), lambda).unwrap();
        let cond = check_sufficient_conditions(&mesh, &weights, lambda).unwrap();
        let det = build_system(&basis, &weights, &[1.0, 1.0]).unwrap().det;
        prop_assert!(cond.smallness_holds);
        prop_assert!(det > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn capacity_decreases_under_refinement(ratio in 1.2f64..6.0) {
        let caps: Vec<f64> = (0..3)
            .map(|k| capacity_fem(&annulus_mesh(1.0, ratio, 4, 16, k).unwrap()).unwrap())
            .collect();
        let exact = 2.0 * PI / ratio.ln();
        prop_assert!(caps[0] >= caps[1] && caps[1] >= caps[2], "{caps:?}");
        prop_assert!(caps[2] >= exact * (1.0 - 1e-12), "{caps:?} vs {exact}");
    }

    #[test]
    fn non_critical_weight_keeps_det_away_from_zero(c0 in 0.1f64..0.9) {
        for k in 0..=80 {
            let lambda = 20.0 + k as f64;
            let det = radial::example2_det(lambda, c0).unwrap();
            prop_assert!(det >= 0.5 * (1.0 - c0 / critical_c0()), "{lambda}: {det}");
        }
    }
}
