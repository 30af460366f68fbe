//! Reduced-size invariant checks across all modules, run by `geoinv selftest`.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;

use crate::error::Result;
use crate::expr_map::{parse, to_smooth_map};
use crate::inverse_solver::{
    estimate_hadamard, invert, invert_continuation, invert_geodesic, lipschitz_probe, newton_polish,
    InversionOptions,
};
use crate::map_model::{fd_check, make_builtin, max_derivative_discrepancy, BuiltinMap, BuiltinMapId, SmoothMap};
use crate::numerics::ode::{integrate_adaptive, OdeProblem};
use crate::numerics::svd::{sigma_min, singular_values};
use crate::numerics::vector::{distance, max_abs_diff};
use crate::numerics::{solve_linear, Matrix, Tensor3};
use crate::pullback_geometry::{
    christoffel_metric, christoffel_pushforward, exp_map, line_deviation, speed_drift, PathTolerances,
};
use crate::sampling::{seeded_rng, SearchBox};

/// Deliberate defects used to confirm that the suite catches regressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negates every second derivative, which flips the sign of the
    /// Christoffel symbols.
    ChristoffelSign,
}

/// Wraps a map and negates its second-derivative tensor.
pub struct FlippedCurvature<M>(pub M);

impl<M: SmoothMap> SmoothMap for FlippedCurvature<M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.eval(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.0.jacobian(x)
    }

    fn second_derivative(&self, x: &[f64]) -> Result<Tensor3> {
        Ok(self.0.second_derivative(x)?.map(|v| -v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = std::result::Result<String, String>;

struct Ctx {
    fault: Option<Fault>,
    seed: u64,
}

impl Ctx {
    fn map(&self, name: &str, n: usize) -> Box<dyn SmoothMap> {
        let m = builtin(name, n);
        match self.fault {
            Some(Fault::ChristoffelSign) => Box::new(FlippedCurvature(m)),
            None => Box::new(m),
        }
    }
}

fn builtin(name: &str, n: usize) -> BuiltinMap {
    make_builtin(&name.parse::<BuiltinMapId>().expect("corpus name"), n).expect("corpus map")
}

const CORPUS: [&str; 4] = ["identity", "linear", "sinperturb", "cyclosin"];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lift<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_point(rng: &mut impl Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

fn lu_multiply_back(ctx: &Ctx) -> Check {
    let mut rng = seeded_rng(ctx.seed);
    let mut worst: f64 = 0.0;
    for n in 1..=6 {
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| random_point(&mut rng, n, 1.0)).collect();
            let mut a = lift(Matrix::from_rows(&rows))?;
            for i in 0..n {
                a[(i, i)] += n as f64;
            }
            let b = random_point(&mut rng, n, 1.0);
            let x = lift(solve_linear(&a, &b))?;
            worst = worst.max(max_abs_diff(&a.mul_vec(&x), &b));
        }
    }
    ensure(worst <= 1e-12, || format!("|Ax - b| = {worst:e}"))?;
    Ok(format!("max |Ax - b| = {worst:.1e}"))
}

fn svd_reference_values(_: &Ctx) -> Check {
    let a = lift(Matrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 5.0]]))?;
    let s = singular_values(&a);
    let want = [45f64.sqrt(), 5f64.sqrt()];
    ensure(max_abs_diff(&s, &want) <= 1e-12, || format!("got {s:?}"))?;
    let j = lift(builtin("expc", 2).jacobian(&[-1.0, 0.7]))?;
    let sm = sigma_min(&j);
    ensure((sm - (-1f64).exp()).abs() <= 1e-12, || format!("expc sigma_min {sm}"))?;
    Ok(format!("sigma_min(expc, x1=-1) = {sm:.9}"))
}

fn ode_exponential(_: &Ctx) -> Check {
    let p = OdeProblem::new(|_, y: &[f64]| Ok(y.to_vec()), 0.0, 1.0, vec![1.0]);
    let traj = integrate_adaptive(&p).map_err(|f| f.error.to_string())?;
    let y1 = traj.last().map(|(_, y)| y[0]).unwrap_or(f64::NAN);
    let err = (y1 - std::f64::consts::E).abs();
    ensure(err <= 1e-8, || format!("y(1) error {err:e}"))?;
    Ok(format!("{} steps, error {err:.1e}", traj.accepted_steps()))
}

fn builtin_derivatives(ctx: &Ctx) -> Check {
    let mut rng = seeded_rng(ctx.seed);
    let mut worst: f64 = 0.0;
    for (name, n) in [("identity", 3), ("linear", 3), ("sinperturb", 3), ("cyclosin", 3), ("shear2", 2), ("expc", 2)] {
        let map = ctx.map(name, n);
        for _ in 0..20 {
            let x = random_point(&mut rng, n, 2.0);
            let fd = lift(fd_check(map.as_ref(), &x, 1e-4))?;
            let scale = 1.0 + lift(map.second_derivative(&x))?.max_abs();
            let e = fd.jac_error.max(fd.hess_error) / scale;
            ensure(e <= 1e-5, || format!("{name} at {x:?}: {fd:?}"))?;
            worst = worst.max(e);
        }
    }
    Ok(format!("max relative fd error {worst:.1e}"))
}

const EXPC_SOURCE: &str = "dim 2\nf1 = exp(x1)*cos(x2)\nf2 = exp(x1)*sin(x2)\n";

fn parser_round_trip(_: &Ctx) -> Check {
    let sources = [
        EXPC_SOURCE,
        "dim 1\nf1 = x1 + 0.5*sin(x1)",
        "dim 3 # cyclic\nf1 = x1 - 2^-x2^2\nf2 = (x2 + atan(x3)) / (1 + e)\nf3 = -x3*pi + sqrt(cosh(x1))",
    ];
    for src in sources {
        let ast = parse(src).map_err(|e| e.to_string())?;
        let again = parse(&ast.to_string()).map_err(|e| e.to_string())?;
        ensure(again == ast, || format!("round trip changed {src:?}"))?;
    }
    let bad = parse("dim 1\nf1 = x1 +").err();
    ensure(bad.as_ref().is_some_and(|e| e.line == 2), || format!("truncated input gave {bad:?}"))?;
    Ok(format!("{} sources", sources.len()))
}

fn expr_matches_builtin(ctx: &Ctx) -> Check {
    let parsed = lift(to_smooth_map(parse(EXPC_SOURCE).map_err(|e| e.to_string())?))?;
    let reference = builtin("expc", 2);
    let mut rng = seeded_rng(ctx.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = random_point(&mut rng, 2, 2.0);
        worst = worst.max(lift(max_derivative_discrepancy(&parsed, &reference, &x))?);
    }
    ensure(worst <= 1e-12, || format!("discrepancy {worst:e}"))?;
    Ok(format!("max discrepancy {worst:.1e}"))
}

fn hyperdual_vs_fd(ctx: &Ctx) -> Check {
    let src = "dim 2\nf1 = x1^3*tanh(x2) + log(2 + sin(x1*x2))\nf2 = sqrt(1 + x1^2)/(2 + cos(x2)) - atan(x1 - x2)";
    let map = lift(to_smooth_map(parse(src).map_err(|e| e.to_string())?))?;
    let mut rng = seeded_rng(ctx.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = random_point(&mut rng, 2, 1.5);
        let fd = lift(fd_check(&map, &x, 1e-4))?;
        let scale = 1.0 + lift(map.second_derivative(&x))?.max_abs();
        worst = worst.max(fd.jac_error.max(fd.hess_error) / scale);
    }
    ensure(worst <= 1e-5, || format!("relative fd error {worst:e}"))?;
    Ok(format!("max relative fd error {worst:.1e}"))
}

fn christoffel_agreement(ctx: &Ctx) -> Check {
    let mut rng = seeded_rng(ctx.seed);
    let mut worst: f64 = 0.0;
    for name in ["sinperturb", "cyclosin", "shear2", "expc"] {
        let n = if matches!(name, "shear2" | "expc") { 2 } else { 3 };
        let map = ctx.map(name, n);
        for _ in 0..20 {
            let x = random_point(&mut rng, n, 2.0);
            let a = lift(christoffel_metric(map.as_ref(), &x))?;
            let b = lift(christoffel_pushforward(map.as_ref(), &x))?;
            worst = worst.max(a.gamma.max_abs_diff(&b.gamma));
        }
    }
    ensure(worst <= 1e-9, || format!("formulas differ by {worst:e}"))?;

    let shear = lift(christoffel_pushforward(ctx.map("shear2", 2).as_ref(), &[0.3, -0.4]))?;
    let g = shear.gamma[(1, 0, 0)];
    ensure((g - 2.0).abs() <= 1e-10, || format!("shear2 Γ²₁₁ = {g}"))?;
    let expc = lift(christoffel_metric(ctx.map("expc", 2).as_ref(), &[0.0, 0.0]))?.gamma;
    let hand = [(expc[(0, 0, 0)], 1.0), (expc[(0, 1, 1)], -1.0), (expc[(1, 0, 1)], 1.0)];
    for (got, want) in hand {
        ensure((got - want).abs() <= 1e-10, || format!("expc symbol {got}, expected {want}"))?;
    }
    Ok(format!("max formula gap {worst:.1e}; hand values match"))
}

fn geodesic_straightness(ctx: &Ctx) -> Check {
    let mut rng = seeded_rng(ctx.seed);
    let tol = PathTolerances::default();
    let mut worst: f64 = 0.0;
    for name in ["sinperturb", "cyclosin"] {
        let map = ctx.map(name, 3);
        for _ in 0..5 {
            let p = random_point(&mut rng, 3, 3.0);
            let u = random_point(&mut rng, 3, 2.0);
            let trace = exp_map(map.as_ref(), &p, &u, 1.0, &tol).map_err(|f| f.error.to_string())?;
            let dev = lift(line_deviation(map.as_ref(), &trace))?;
            let drift = lift(speed_drift(map.as_ref(), &trace))?;
            ensure(dev <= 1e-6 && drift <= 1e-6, || format!("{name}: line deviation {dev:e}, speed drift {drift:e}"))?;
            worst = worst.max(dev).max(drift);
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn round_trip(ctx: &Ctx) -> Check {
    let mut rng = seeded_rng(ctx.seed);
    let opts = InversionOptions::default();
    let mut count = 0;
    for name in CORPUS {
        for n in [1, 2, 3] {
            let map = ctx.map(name, n);
            for _ in 0..5 {
                let x_star = random_point(&mut rng, n, 10.0);
                let y = lift(map.eval(&x_star))?;
                let r = lift(invert(map.as_ref(), &y, &opts))?;
                let err = distance(&r.solution, &x_star);
                ensure(r.succeeded() && r.residual <= 1e-10 && err <= 1e-8, || {
                    format!("{name} n={n}: residual {:e}, error {err:e}, failure {:?}", r.residual, r.failure)
                })?;
                count += 1;
            }
        }
    }
    Ok(format!("{count} inversions"))
}

fn method_agreement(ctx: &Ctx) -> Check {
    let mut rng = seeded_rng(ctx.seed);
    let opts = InversionOptions::default();
    let mut worst: f64 = 0.0;
    for name in ["sinperturb", "cyclosin"] {
        for n in [2, 3] {
            let map = ctx.map(name, n);
            for _ in 0..3 {
                let y = lift(map.eval(&random_point(&mut rng, n, 10.0)))?;
                let c = lift(invert_continuation(map.as_ref(), &y, &opts))?;
                let g = lift(invert_geodesic(map.as_ref(), &y, &opts))?;
                let (Some(a), Some(b)) = (c.pre_polish(), g.pre_polish()) else {
                    return Err(format!("{name} n={n}: empty trace"));
                };
                let gap = distance(a, b);
                ensure(c.succeeded() && g.succeeded() && gap <= 1e-6, || {
                    format!("{name} n={n}: endpoints differ by {gap:e}")
                })?;
                worst = worst.max(gap);
            }
        }
    }
    Ok(format!("max endpoint gap {worst:.1e}"))
}

fn newton_convergence(_: &Ctx) -> Check {
    let map = builtin("sinperturb", 1);
    let y = lift(map.eval(&[1.0]))?;
    let p = lift(newton_polish(&map, &y, &[1.01], 1e-14, 20))?;
    ensure(p.iters <= 5 && (p.x[0] - 1.0).abs() <= 1e-14, || format!("{p:?}"))?;
    let r = &p.residuals;
    let quadratic = r.windows(2).filter(|w| w[1] > 1e-13).all(|w| w[1] <= 10.0 * w[0] * w[0]);
    ensure(quadratic, || format!("residuals {r:?}"))?;
    Ok(format!("{} iterations", p.iters))
}

fn hadamard_estimator(ctx: &Ctx) -> Check {
    let expc = builtin("expc", 2);
    let mut previous = f64::INFINITY;
    for r in [1.0f64, 2.0, 3.0] {
        let b = lift(SearchBox::new(vec![[-r, r].into(), [-PI, PI].into()]))?;
        let e = lift(estimate_hadamard(&expc, &b, 21, 50, false, ctx.seed))?;
        let want = (-2.0 * r).exp();
        ensure((e.c_hat - want).abs() <= 0.01 * want && e.c_hat < previous, || {
            format!("R={r}: c_hat {} vs {want}", e.c_hat)
        })?;
        previous = e.c_hat;
    }
    let sp = builtin("sinperturb", 1);
    let e = lift(estimate_hadamard(&sp, &lift(SearchBox::cube(1, -10.0, 10.0))?, 2001, 0, false, ctx.seed))?;
    ensure((e.c_hat - 0.25).abs() <= 0.0025, || format!("sinperturb c_hat {}", e.c_hat))?;
    Ok("expc decay and sinperturb(0.5) within 1%".into())
}

fn lipschitz_bound(ctx: &Ctx) -> Check {
    for name in CORPUS {
        let map = builtin(name, 2);
        let b = lift(SearchBox::cube(2, -10.0, 10.0))?;
        let est = lift(estimate_hadamard(&map, &b, 41, 0, true, ctx.seed))?;
        let probe = lift(lipschitz_probe(&map, est.c_hat, 200, &b, ctx.seed, &[]))?;
        ensure(probe.violations.is_empty(), || format!("{name}: {} violations", probe.violations.len()))?;
    }
    let pair = (vec![0.0, 0.0], vec![0.0, 2.0 * PI]);
    let b = lift(SearchBox::cube(2, -1.0, 1.0))?;
    let probe = lift(lipschitz_probe(&builtin("expc", 2), (-2f64).exp(), 50, &b, ctx.seed, &[pair]))?;
    ensure(!probe.violations.is_empty(), || "periodic expc pair not flagged".into())?;
    Ok("corpus clean; expc periodic pair flagged".into())
}

fn failure_honesty(_: &Ctx) -> Check {
    let r = lift(invert(&builtin("expc", 2), &[0.0, 0.0], &InversionOptions::default()))?;
    let Some(f) = &r.failure else {
        return Err(format!("reported success at {:?}", r.solution));
    };
    let x1 = f.position.as_ref().map_or(f64::NAN, |p| p[0]);
    ensure(f.kind == "path_diverged" && x1 < -10.0, || format!("{} with x1 = {x1}", f.kind))?;
    Ok(format!("path_diverged at x1 = {x1:.2}"))
}

type Suite = (&'static str, fn(&Ctx) -> Check);

const SUITES: [Suite; 15] = [
    ("lu_multiply_back", lu_multiply_back),
    ("svd_reference_values", svd_reference_values),
    ("ode_exponential", ode_exponential),
    ("builtin_derivatives", builtin_derivatives),
    ("parser_round_trip", parser_round_trip),
    ("expr_matches_builtin", expr_matches_builtin),
    ("hyperdual_vs_fd", hyperdual_vs_fd),
    ("christoffel_agreement", christoffel_agreement),
    ("geodesic_straightness", geodesic_straightness),
    ("round_trip", round_trip),
    ("method_agreement", method_agreement),
    ("newton_convergence", newton_convergence),
    ("hadamard_estimator", hadamard_estimator),
    ("lipschitz_bound", lipschitz_bound),
    ("failure_honesty", failure_honesty),
];

/// Runs every suite in order; `fault` corrupts the maps handed to the
/// geometry-dependent suites.
pub fn run_selftest(fault: Option<Fault>) -> Vec<SuiteOutcome> {
    let ctx = Ctx { fault, seed: 20240611 };
    SUITES
        .iter()
        .map(|&(name, suite)| {
            let start = Instant::now();
            let result = suite(&ctx);
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match result {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            SuiteOutcome { name, passed, detail, seconds }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        let out = run_selftest(None);
        assert!(out.len() >= 12);
        for s in &out {
            assert!(s.passed, "{}: {}", s.name, s.detail);
        }
    }

    #[test]
    fn flipped_christoffel_sign_is_caught() {
        let out = run_selftest(Some(Fault::ChristoffelSign));
        let failed: Vec<&str> = out.iter().filter(|s| !s.passed).map(|s| s.name).collect();
        assert!(failed.contains(&"christoffel_agreement"), "{failed:?}");
        assert!(failed.contains(&"geodesic_straightness"), "{failed:?}");
    }
}
