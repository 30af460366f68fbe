//! `demo-exp`: the complex exponential, viewed as a map of ℝ², is a local
//! diffeomorphism with `σ_min(Df) = e^{x1}` that is neither injective nor
//! surjective.

use std::f64::consts::PI;

use geoinv::inverse_solver::{estimate_hadamard, invert, lipschitz_probe, InversionOptions};
use geoinv::numerics::svd::sigma_min;
use geoinv::numerics::vector::distance;
use geoinv::sampling::SearchBox;
use geoinv::{make_builtin, BuiltinMapId, SmoothMap};

use crate::commands::CmdResult;

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

pub fn run() -> CmdResult {
    let f = make_builtin(&BuiltinMapId::Expc, 2)?;

    println!("== map ==");
    println!("f(x1, x2) = (exp(x1) cos(x2), exp(x1) sin(x2))");
    println!("Df = exp(x1) R(x2), R a rotation, so sigma_min(Df) = exp(x1)");
    println!();

    println!("== Jacobian at sample points ==");
    for x in [[-1.0, 0.0], [0.0, 0.0], [1.0, PI / 2.0], [-3.0, PI]] {
        let j = f.jacobian(&x)?;
        let s = sigma_min(&j);
        println!(
            "x = {}  Df = [[{:.6}, {:.6}], [{:.6}, {:.6}]]  sigma_min = {s:.6}  exp(x1) = {:.6}",
            fmt_point(&x),
            j[(0, 0)],
            j[(0, 1)],
            j[(1, 0)],
            j[(1, 1)],
            x[0].exp()
        );
    }
    println!();

    println!("== sigma_min at x1=-1 ==");
    let s = sigma_min(&f.jacobian(&[-1.0, 0.0])?);
    println!("sigma_min = {s:.9} (exp(-1) = {:.9})", (-1f64).exp());
    println!("||Df^-1|| = {:.6}, unbounded as x1 -> -inf", 1.0 / s);
    println!();

    println!("== c_hat over growing boxes ==");
    println!("{:>3}  {:>14}  {:>14}", "R", "c_hat", "exp(-2R)");
    for r in 1..=5 {
        let r = r as f64;
        let b = SearchBox::new(vec![[-r, r].into(), [-PI, PI].into()])?;
        let e = estimate_hadamard(&f, &b, 41, 0, false, 0)?;
        println!("{r:>3}  {:>14.6e}  {:>14.6e}", e.c_hat, (-2.0 * r).exp());
    }
    println!("the hypothesis fails: inf over the plane is 0");
    println!();

    println!("== invert (0,0) ==");
    let report = invert(&f, &[0.0, 0.0], &InversionOptions::default())?;
    match &report.failure {
        Some(fail) => {
            println!("result: {}", fail.kind);
            if let Some(p) = &fail.position {
                println!("last position {} after {} steps", fmt_point(p), report.ode_steps);
            }
            println!("the path runs off to x1 -> -inf; (0,0) is not in the image");
        }
        None => println!("result: converged to {} (unexpected)", fmt_point(&report.solution)),
    }
    println!();

    println!("== periodicity ==");
    let (a, b) = ([0.0, 0.0], [0.0, 2.0 * PI]);
    let gap = distance(&f.eval(&a)?, &f.eval(&b)?);
    println!("|f(0,0) - f(0,2pi)| = {gap:.3e}, |x - y| = {:.6}", distance(&a, &b));
    let unit = SearchBox::cube(2, -1.0, 1.0)?;
    let probe = lipschitz_probe(&f, (-2f64).exp(), 0, &unit, 0, &[(a.to_vec(), b.to_vec())])?;
    println!(
        "lower-Lipschitz check with c = exp(-2): {} violation(s); f is not injective",
        probe.violations.len()
    );
    Ok(0)
}
