use std::f64::consts::PI;

use geoinv::expr_map::{parse, to_smooth_map, BinaryOp, Expr, MapAst, UnaryOp};
use geoinv::map_model::{fd_check, max_derivative_discrepancy};
use geoinv::numerics::svd::sigma_min;
use geoinv::sampling::seeded_rng;
use geoinv::{make_builtin, BuiltinMapId, Error, SmoothMap};
use proptest::prelude::*;
use rand::Rng;

fn builtin(name: &str, n: usize) -> geoinv::BuiltinMap {
    make_builtin(&name.parse::<BuiltinMapId>().unwrap(), n).unwrap()
}

#[test]
fn builtin_derivatives_match_finite_differences() {
    let mut rng = seeded_rng(7);
    for (name, dims) in [
        ("identity", &[1, 2, 3, 5][..]),
        ("linear", &[1, 2, 3, 5]),
        ("sinperturb", &[1, 2, 3, 5]),
        ("cyclosin", &[1, 2, 3, 5]),
        ("shear2", &[2]),
        ("expc", &[2]),
    ] {
        for &n in dims {
            let f = builtin(name, n);
            for _ in 0..100 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let fd = fd_check(&f, &x, 1e-4).unwrap();
                let scale = 1.0 + f.eval(&x).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(fd.jac_error <= 1e-7 * scale, "{name} n={n} {x:?}: {fd:?}");
                assert!(fd.hess_error <= 1e-5 * scale, "{name} n={n} {x:?}: {fd:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn cyclosin_stays_well_conditioned(x in prop::collection::vec(-20.0f64..20.0, 1..6), alpha in -0.9f64..0.9) {
        let f = make_builtin(&BuiltinMapId::CycloSin(alpha), x.len()).unwrap();
        let s = sigma_min(&f.jacobian(&x).unwrap());
        prop_assert!(s >= 1.0 - alpha.abs() - 1e-12);
    }

    #[test]
    fn second_derivatives_are_symmetric(x in prop::collection::vec(-5.0f64..5.0, 2..5)) {
        for name in ["sinperturb", "cyclosin", "linear"] {
            let h = builtin(name, x.len()).second_derivative(&x).unwrap();
            prop_assert_eq!(h.max_asymmetry(), 0.0);
        }
    }

    #[test]
    fn sinperturb_hadamard_constant(x in -50.0f64..50.0) {
        let f = builtin("sinperturb", 1);
        let s = sigma_min(&f.jacobian(&[x]).unwrap());
        prop_assert!(s * s >= 0.25 - 1e-15);
        prop_assert!((s - (1.0 + 0.5 * x.cos()).abs()).abs() <= 1e-15);
    }
}

fn leaf(n: usize) -> impl Strategy<Value = Expr> {
    prop_oneof![(1..=n).prop_map(Expr::Var), (0.0f64..3.0).prop_map(Expr::Const)]
}

/// Arbitrary trees over every operator; constants are non-negative so the
/// printed form parses back to the same tree.
fn any_expr(n: usize) -> impl Strategy<Value = Expr> {
    leaf(n).prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            (prop::sample::select(UnaryOp::FUNCTIONS.to_vec()), inner.clone()).prop_map(|(op, a)| Expr::unary(op, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Neg, a)),
            (
                prop::sample::select(vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Pow]),
                inner.clone(),
                inner
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        ]
    })
}

fn one_plus_square(e: Expr) -> Expr {
    Expr::binary(BinaryOp::Add, Expr::Const(1.0), Expr::binary(BinaryOp::Mul, e.clone(), e))
}

/// Trees that are smooth and finite on `[-1, 1]ⁿ`: every log, sqrt and
/// division acts on `1 + g²`, powers are small integers, and exponentials are
/// wrapped in a bounded function.
fn smooth_expr(n: usize) -> impl Strategy<Value = Expr> {
    leaf(n).prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (
                prop::sample::select(vec![UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Atan, UnaryOp::Tanh, UnaryOp::Neg]),
                inner.clone()
            )
                .prop_map(|(op, a)| Expr::unary(op, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Exp, Expr::unary(UnaryOp::Sin, a))),
            (prop::sample::select(vec![UnaryOp::Log, UnaryOp::Sqrt]), inner.clone())
                .prop_map(|(op, a)| Expr::unary(op, one_plus_square(a))),
            (prop::sample::select(vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul]), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Div, a, one_plus_square(b))),
            (inner, 2u32..4).prop_map(|(a, k)| Expr::binary(BinaryOp::Pow, a, Expr::Const(k as f64))),
        ]
    })
}

fn map_of(n: usize, exprs: impl Strategy<Value = Expr>) -> impl Strategy<Value = MapAst> {
    prop::collection::vec(exprs, n).prop_map(move |components| MapAst { dim: n, components })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn printed_maps_parse_back(ast in (1usize..4).prop_flat_map(|n| map_of(n, any_expr(n)))) {
        let text = ast.to_string();
        prop_assert_eq!(parse(&text).unwrap(), ast);
    }

    #[test]
    fn hyperdual_derivatives_match_central_differences(
        ast in (1usize..4).prop_flat_map(|n| map_of(n, smooth_expr(n))),
        seed in any::<u64>(),
    ) {
        let n = ast.dim;
        let map = to_smooth_map(ast).unwrap();
        let mut rng = seeded_rng(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fx = map.eval(&x).unwrap();
        let j = map.jacobian(&x).unwrap();
        let h2 = map.second_derivative(&x).unwrap();
        let at = |steps: &[(usize, f64)]| {
            let mut p = x.clone();
            for &(i, s) in steps {
                p[i] += s;
            }
            map.eval(&p).unwrap()
        };
        let (h, hh) = (1e-5, 1e-4);
        for a in 0..n {
            let scale = 1.0 + fx[a].abs();
            for i in 0..n {
                let d = (at(&[(i, h)])[a] - at(&[(i, -h)])[a]) / (2.0 * h);
                prop_assert!((d - j[(a, i)]).abs() <= 1e-6 * (scale + j[(a, i)].abs()), "J[{a}][{i}]: {d} vs {}", j[(a, i)]);
                for k in 0..n {
                    let d2 = if i == k {
                        (at(&[(i, hh)])[a] - 2.0 * fx[a] + at(&[(i, -hh)])[a]) / (hh * hh)
                    } else {
                        let s = |u: f64, v: f64| at(&[(i, u * hh), (k, v * hh)])[a];
                        (s(1.0, 1.0) - s(1.0, -1.0) - s(-1.0, 1.0) + s(-1.0, -1.0)) / (4.0 * hh * hh)
                    };
                    let want = h2[(a, i, k)];
                    prop_assert!((d2 - want).abs() <= 1e-6 * (scale + want.abs()), "H[{a}][{i}][{k}]: {d2} vs {want}");
                }
            }
        }
    }

    #[test]
    fn mixed_partials_are_bitwise_symmetric(
        ast in (2usize..4).prop_flat_map(|n| map_of(n, smooth_expr(n))),
        seed in any::<u64>(),
    ) {
        let n = ast.dim;
        let map = to_smooth_map(ast).unwrap();
        let mut rng = seeded_rng(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for j in 0..n {
            for k in 0..n {
                let a = map.eval_seeded(&x, j, k).unwrap();
                let b = map.eval_seeded(&x, k, j).unwrap();
                for (p, q) in a.iter().zip(&b) {
                    prop_assert_eq!(p.d12.to_bits(), q.d12.to_bits());
                }
            }
        }
        let h = map.second_derivative(&x).unwrap();
        prop_assert_eq!(h.max_asymmetry(), 0.0);
    }

    #[test]
    fn integer_powers_match_repeated_products(x in -3.0f64..3.0, k in 1u32..7) {
        let src = format!("dim 1\nf1 = x1^{k}");
        let map = to_smooth_map(parse(&src).unwrap()).unwrap();
        let (v, j, h) = map.derivatives(&[x]).unwrap();
        let kf = k as f64;
        prop_assert!((v[0] - x.powi(k as i32)).abs() <= 1e-12 * (1.0 + v[0].abs()));
        prop_assert!((j[(0, 0)] - kf * x.powi(k as i32 - 1)).abs() <= 1e-12 * (1.0 + j[(0, 0)].abs()));
        let want = if k >= 2 { kf * (kf - 1.0) * x.powi(k as i32 - 2) } else { 0.0 };
        prop_assert!((h[(0, 0, 0)] - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

#[test]
fn parsed_exponential_matches_builtin() {
    let ast = parse("dim 2\nf1 = exp(x1)*cos(x2)\nf2 = exp(x1)*sin(x2)").unwrap();
    let parsed = to_smooth_map(ast).unwrap();
    let reference = builtin("expc", 2);
    let mut rng = seeded_rng(11);
    for _ in 0..50 {
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        assert!(max_derivative_discrepancy(&parsed, &reference, &x).unwrap() <= 1e-12);
    }
}

#[test]
fn scalar_examples() {
    let sq = to_smooth_map(parse("dim 1\nf1 = x1^2").unwrap()).unwrap();
    let (v, j, h) = sq.derivatives(&[3.0]).unwrap();
    assert_eq!((v[0], j[(0, 0)], h[(0, 0, 0)]), (9.0, 6.0, 2.0));

    let s = to_smooth_map(parse("dim 1\nf1 = sin(x1)").unwrap()).unwrap();
    let (v, j, h) = s.derivatives(&[PI / 2.0]).unwrap();
    assert_eq!(v[0], 1.0);
    assert!(j[(0, 0)].abs() < 1e-16);
    assert_eq!(h[(0, 0, 0)], -1.0);
}

#[test]
fn parse_errors_point_at_the_problem() {
    let cases = [
        ("dim 1\nf1 = x1 +", 2, 10),
        ("dim 2\nf1 = x1\nf1 = x2", 3, 1),
        ("dim 1\nf1 = x2", 2, 6),
        ("dim 1\nf1 = foo(x1)", 2, 6),
        ("dim 1\nf1 = (x1", 2, 9),
        ("dimension 1", 1, 1),
    ];
    for (src, line, column) in cases {
        let e = parse(src).unwrap_err();
        assert_eq!((e.line, e.column), (line, column), "{src:?}: {e}");
        assert!(!e.message.is_empty());
    }
    assert!(parse("dim 2\nf1 = x1").unwrap_err().message.contains("f2"));
}

#[test]
fn grammar_tolerates_whitespace_and_comments() {
    let a = parse("# header\ndim 2\n\nf2 = (x1 +\n  x2)  # split\nf1=-x1^2^0.5*pi/e\n").unwrap();
    assert_eq!(a.dim, 2);
    let b = parse(&a.to_string()).unwrap();
    assert_eq!(a, b);
    // '^' binds right-associatively and tighter than unary minus on its base
    let c = parse("dim 1\nf1 = -2^3^2").unwrap();
    assert_eq!(c.components[0].constant_value(), Some(-512.0));
}

#[test]
fn domain_errors_carry_the_point() {
    for (src, x) in [("dim 1\nf1 = log(x1)", -1.0), ("dim 1\nf1 = sqrt(x1)", -1.0), ("dim 1\nf1 = 1/x1", 0.0)] {
        let m = to_smooth_map(parse(src).unwrap()).unwrap();
        match m.eval(&[x]) {
            Err(Error::Domain { point, .. }) => assert_eq!(point, vec![x]),
            other => panic!("{src}: {other:?}"),
        }
    }
    let div = to_smooth_map(parse("dim 1\nf1 = 1/x1").unwrap()).unwrap();
    assert!(matches!(div.jacobian(&[0.0]), Err(Error::Domain { .. })));
}
