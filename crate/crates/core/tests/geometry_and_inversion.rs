use std::f64::consts::PI;

use geoinv::inverse_solver::{
    estimate_hadamard, invert, invert_continuation, invert_geodesic, lipschitz_probe, newton_polish, InversionOptions,
    Method,
};
use geoinv::numerics::svd::sigma_min;
use geoinv::numerics::vector::distance;
use geoinv::pullback_geometry::{
    christoffel_metric, christoffel_pushforward, exp_map, line_deviation, metric_tensor, speed_drift, PathTolerances,
};
use geoinv::sampling::{seeded_rng, SearchBox};
use geoinv::{make_builtin, BuiltinMapId, Error, SmoothMap};
use proptest::prelude::*;
use rand::Rng;

fn builtin(name: &str, n: usize) -> geoinv::BuiltinMap {
    make_builtin(&name.parse::<BuiltinMapId>().unwrap(), n).unwrap()
}

fn point(rng: &mut impl Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn christoffel_formulas_agree(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        for (name, n) in [("sinperturb", 3), ("cyclosin", 3), ("cyclosin", 2), ("shear2", 2), ("expc", 2), ("linear", 3)] {
            let f = builtin(name, n);
            let x = point(&mut rng, n, 3.0);
            let a = christoffel_metric(&f, &x).unwrap().gamma;
            let b = christoffel_pushforward(&f, &x).unwrap().gamma;
            prop_assert!(a.max_abs_diff(&b) <= 1e-9, "{name}: {}", a.max_abs_diff(&b));
            prop_assert!(a.max_asymmetry() <= 1e-12);
        }
    }

    #[test]
    fn metric_is_positive_definite(x in prop::collection::vec(-5.0f64..5.0, 3), u in prop::collection::vec(-1.0f64..1.0, 3)) {
        let f = builtin("cyclosin", 3);
        let g = metric_tensor(&f, &x).unwrap();
        let nu: f64 = u.iter().map(|v| v * v).sum();
        prop_assume!(nu > 1e-6);
        prop_assert!(g.inner(&u, &u) >= 0.36 * nu * (1.0 - 1e-12));
        let ju = f.jacobian(&x).unwrap().mul_vec(&u);
        let direct: f64 = ju.iter().map(|v| v * v).sum();
        prop_assert!((g.inner(&u, &u) - direct).abs() <= 1e-12 * (1.0 + direct));
    }
}

#[test]
fn hand_christoffel_values() {
    let shear = christoffel_pushforward(&builtin("shear2", 2), &[0.7, -1.3]).unwrap().gamma;
    assert!((shear[(1, 0, 0)] - 2.0).abs() <= 1e-10);
    let expc = christoffel_metric(&builtin("expc", 2), &[0.0, 0.0]).unwrap().gamma;
    assert!((expc[(0, 0, 0)] - 1.0).abs() <= 1e-10);
    assert!((expc[(0, 1, 1)] + 1.0).abs() <= 1e-10);
    assert!((expc[(1, 0, 1)] - 1.0).abs() <= 1e-10);
    assert!((expc[(1, 1, 0)] - 1.0).abs() <= 1e-10);
}

#[test]
fn geodesics_map_to_straight_lines() {
    let mut rng = seeded_rng(5);
    let tol = PathTolerances::default();
    for (name, n) in [("sinperturb", 2), ("cyclosin", 3), ("shear2", 2), ("expc", 2), ("sinperturb", 5)] {
        let f = builtin(name, n);
        for _ in 0..10 {
            let p = point(&mut rng, n, 2.0);
            let u = point(&mut rng, n, 1.5);
            let trace = exp_map(&f, &p, &u, 1.0, &tol).unwrap();
            let w = f.jacobian(&p).unwrap().mul_vec(&u);
            let scale = 1.0 + w.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(line_deviation(&f, &trace).unwrap() <= 1e-7 * scale, "{name}");
            assert!(speed_drift(&f, &trace).unwrap() <= 1e-7, "{name}");
        }
    }
}

#[test]
fn geodesics_reparametrize_linearly() {
    // exp_p(t·u) at time 1 equals exp_p(u) at time t.
    let f = builtin("cyclosin", 3);
    let tol = PathTolerances::default();
    let p = [0.3, -1.2, 2.0];
    let u = [0.8, 0.5, -1.1];
    let long = exp_map(&f, &p, &u, 2.0, &tol).unwrap();
    let doubled: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
    let short = exp_map(&f, &p, &doubled, 1.0, &tol).unwrap();
    assert!(distance(long.final_position().unwrap(), short.final_position().unwrap()) <= 1e-8);
}

#[test]
fn geodesic_reaches_the_sinperturb_preimage() {
    let f = builtin("sinperturb", 1);
    let u = [2.0 / 1.5];
    let trace = exp_map(&f, &[0.0], &u, 1.0, &PathTolerances::default()).unwrap();
    let x = trace.final_position().unwrap()[0];
    assert!((f.eval(&[x]).unwrap()[0] - 2.0).abs() <= 1e-7);
}

#[test]
fn critical_start_is_rejected() {
    let flat = make_builtin(
        &BuiltinMapId::Linear {
            matrix: Some(geoinv::Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-9]]).unwrap()),
            offset: None,
        },
        2,
    )
    .unwrap();
    let fail = exp_map(&flat, &[0.0, 0.0], &[1.0, 0.0], 1.0, &PathTolerances::default()).unwrap_err();
    assert!(matches!(fail.error, Error::SingularJacobian { .. }));
}

#[test]
fn round_trip_with_both_methods() {
    let mut rng = seeded_rng(99);
    let opts = InversionOptions::default();
    for name in ["identity", "linear", "sinperturb", "cyclosin"] {
        for n in [1, 2, 3, 5] {
            let f = builtin(name, n);
            for _ in 0..6 {
                let x_star = point(&mut rng, n, 10.0);
                let y = f.eval(&x_star).unwrap();
                let c = invert_continuation(&f, &y, &opts).unwrap();
                let g = invert_geodesic(&f, &y, &opts).unwrap();
                for r in [&c, &g] {
                    assert!(r.succeeded(), "{name} n={n}: {:?}", r.failure);
                    assert!(r.residual <= 1e-10);
                    assert!(distance(&r.solution, &x_star) <= 1e-8);
                    let b = distance(&y, &f.eval(&vec![0.0; n]).unwrap());
                    assert!(r.straightness_deviation <= 1e-6 * (1.0 + b));
                    assert_eq!(r.trace.position[0], vec![0.0; n]);
                }
                assert!(distance(c.pre_polish().unwrap(), g.pre_polish().unwrap()) <= 1e-6);
            }
        }
    }
}

#[test]
fn preimage_does_not_depend_on_the_start() {
    let mut rng = seeded_rng(3);
    for name in ["linear", "sinperturb", "cyclosin"] {
        for n in [2, 3] {
            let f = builtin(name, n);
            let x_star = point(&mut rng, n, 8.0);
            let y = f.eval(&x_star).unwrap();
            let a = invert(&f, &y, &InversionOptions::default()).unwrap();
            let b = invert(&f, &y, &InversionOptions::default().with_x0(point(&mut rng, n, 8.0))).unwrap();
            assert!(a.succeeded() && b.succeeded());
            assert!(distance(&a.solution, &b.solution) <= 1e-8);
        }
    }
}

#[test]
fn polish_converges_quadratically() {
    let mut rng = seeded_rng(17);
    for name in ["sinperturb", "cyclosin"] {
        let f = builtin(name, 3);
        for _ in 0..5 {
            let x_star = point(&mut rng, 3, 5.0);
            let y = f.eval(&x_star).unwrap();
            let start: Vec<f64> = x_star.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect();
            let p = newton_polish(&f, &y, &start, 1e-14, 20).unwrap();
            let r = &p.residuals;
            let tail: Vec<&[f64]> = r.windows(2).filter(|w| w[1] > 1e-13).collect();
            for w in tail.iter().rev().take(3) {
                assert!(w[1] <= 10.0 * w[0] * w[0], "{r:?}");
            }
        }
    }
}

#[test]
fn exponential_target_outside_the_image() {
    let f = builtin("expc", 2);
    for method in [Method::Continuation, Method::Geodesic, Method::Auto] {
        let r = invert(&f, &[0.0, 0.0], &InversionOptions::default().with_method(method)).unwrap();
        let fail = r.failure.as_ref().expect("no preimage exists");
        // Along the geodesic |v| = e^{-x1} reaches the state bound exactly
        // where σ_min = e^{x1} crosses the singularity cutoff.
        if method == Method::Geodesic {
            assert!(matches!(fail.kind.as_str(), "path_diverged" | "singular_jacobian"), "{fail:?}");
        } else {
            assert_eq!(fail.kind, "path_diverged", "{method:?}");
        }
        assert!(fail.position.as_ref().unwrap()[0] < -10.0, "{method:?}: {fail:?}");
    }
}

#[test]
fn exponential_inverts_off_the_origin() {
    let f = builtin("expc", 2);
    let x_star = [0.5, 1.0];
    let y = f.eval(&x_star).unwrap();
    let r = invert(&f, &y, &InversionOptions::default()).unwrap();
    assert!(r.succeeded());
    assert!(distance(&r.solution, &x_star) <= 1e-8);
}

#[test]
fn hadamard_estimates() {
    let expc = builtin("expc", 2);
    let mut last = f64::INFINITY;
    for r in [1.0f64, 2.0, 3.0] {
        let b = SearchBox::new(vec![[-r, r].into(), [-PI, PI].into()]).unwrap();
        let e = estimate_hadamard(&expc, &b, 31, 100, true, 4).unwrap();
        let want = (-2.0 * r).exp();
        assert!((e.c_hat - want).abs() <= 0.01 * want);
        assert!(e.c_hat < last);
        assert!(b.contains(&e.argmin));
        let s = sigma_min(&expc.jacobian(&e.argmin).unwrap());
        assert_eq!(e.c_hat, s * s);
        last = e.c_hat;
    }
}

#[test]
fn estimate_ties_resolve_to_the_first_grid_point() {
    let f = builtin("identity", 3);
    let b = SearchBox::cube(3, -1.0, 2.0).unwrap();
    let e = estimate_hadamard(&f, &b, 4, 20, false, 8).unwrap();
    assert_eq!(e.argmin, vec![-1.0, -1.0, -1.0]);
    assert_eq!(e.c_hat, 1.0);
    assert_eq!(e.samples, 84);
}

#[test]
fn estimates_and_probes_are_reproducible() {
    let f = builtin("cyclosin", 2);
    let b = SearchBox::cube(2, -4.0, 4.0).unwrap();
    let a = estimate_hadamard(&f, &b, 9, 50, true, 21).unwrap();
    assert_eq!(a, estimate_hadamard(&f, &b, 9, 50, true, 21).unwrap());
    let p = lipschitz_probe(&f, a.c_hat, 300, &b, 21, &[]).unwrap();
    assert_eq!(p, lipschitz_probe(&f, a.c_hat, 300, &b, 21, &[]).unwrap());
}

#[test]
fn lower_lipschitz_bound_holds_on_the_corpus() {
    for name in ["identity", "linear", "sinperturb", "cyclosin"] {
        for n in [1, 3] {
            let f = builtin(name, n);
            let b = SearchBox::cube(n, -10.0, 10.0).unwrap();
            let c = estimate_hadamard(&f, &b, if n == 1 { 2001 } else { 21 }, 500, true, 2).unwrap().c_hat;
            let p = lipschitz_probe(&f, c, 1000, &b, 6, &[]).unwrap();
            assert!(p.violations.is_empty(), "{name} n={n}: {:?}", p.violations.first());
            assert!(p.min_ratio >= c.sqrt() * (1.0 - 1e-9));
        }
    }
}
