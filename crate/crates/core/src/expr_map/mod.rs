//! User-defined maps written in a small expression language.
//!
//! Expressions are parsed to an AST and evaluated on hyper-dual numbers, so
//! Jacobians and second-derivative tensors are exact. Domain violations
//! (logarithm or square root of a non-positive argument, division by zero,
//! overflow) raise [`Error::Domain`] at the first offending node.

mod ast;
pub mod hyperdual;
mod parser;

use std::ops::{Add, Div, Mul, Neg, Sub};

pub use ast::{BinaryOp, Expr, MapAst, UnaryOp};
pub use hyperdual::HyperDual;
pub use parser::parse;

use crate::error::{Error, Result};
use crate::map_model::SmoothMap;
use crate::numerics::{Matrix, Tensor3};

/// Largest integer exponent evaluated by repeated-multiplication rules.
const MAX_INTEGER_EXPONENT: f64 = 1024.0;

trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Whether derivative parts are carried (tightens the `sqrt` domain).
    const DIFFERENTIATED: bool;
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn chain(self, g: f64, dg: f64, d2g: f64) -> Self;
    fn finite(&self) -> bool;
}

impl Scalar for f64 {
    const DIFFERENTIATED: bool = false;

    fn constant(v: f64) -> Self {
        v
    }

    fn value(&self) -> f64 {
        *self
    }

    fn chain(self, g: f64, _: f64, _: f64) -> Self {
        g
    }

    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for HyperDual {
    const DIFFERENTIATED: bool = true;

    fn constant(v: f64) -> Self {
        HyperDual::constant(v)
    }

    fn value(&self) -> f64 {
        self.v
    }

    fn chain(self, g: f64, dg: f64, d2g: f64) -> Self {
        HyperDual::chain(self, g, dg, d2g)
    }

    fn finite(&self) -> bool {
        self.is_finite()
    }
}

struct Evaluator<'a, S> {
    vars: &'a [S],
    point: &'a [f64],
}

impl<S: Scalar> Evaluator<'_, S> {
    fn domain(&self, op: &str) -> Error {
        Error::Domain { op: op.to_string(), point: self.point.to_vec() }
    }

    fn eval(&self, e: &Expr) -> Result<S> {
        let (out, op) = match e {
            Expr::Const(v) => (S::constant(*v), "constant"),
            Expr::Var(k) => (self.vars[k - 1], "variable"),
            Expr::Unary(op, a) => (self.unary(*op, self.eval(a)?)?, op.name()),
            Expr::Binary(op, a, b) => {
                let lhs = self.eval(a)?;
                let out = match op {
                    BinaryOp::Add => lhs + self.eval(b)?,
                    BinaryOp::Sub => lhs - self.eval(b)?,
                    BinaryOp::Mul => lhs * self.eval(b)?,
                    BinaryOp::Div => {
                        let rhs = self.eval(b)?;
                        if rhs.value() == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        lhs / rhs
                    }
                    BinaryOp::Pow => self.pow(lhs, b)?,
                };
                (out, "arithmetic")
            }
        };
        if !out.finite() {
            return Err(self.domain(&format!("{op} (non-finite result)")));
        }
        Ok(out)
    }

    fn unary(&self, op: UnaryOp, a: S) -> Result<S> {
        let v = a.value();
        Ok(match op {
            UnaryOp::Neg => -a,
            UnaryOp::Sin => {
                let (s, c) = v.sin_cos();
                a.chain(s, c, -s)
            }
            UnaryOp::Cos => {
                let (s, c) = v.sin_cos();
                a.chain(c, -s, -c)
            }
            UnaryOp::Tan => {
                let t = v.tan();
                let sec2 = 1.0 + t * t;
                a.chain(t, sec2, 2.0 * t * sec2)
            }
            UnaryOp::Exp => {
                let e = v.exp();
                a.chain(e, e, e)
            }
            UnaryOp::Log => {
                if !(v > 0.0) {
                    return Err(self.domain("log of non-positive argument"));
                }
                let r = 1.0 / v;
                a.chain(v.ln(), r, -r * r)
            }
            UnaryOp::Sqrt => {
                if v < 0.0 || (S::DIFFERENTIATED && v == 0.0) {
                    return Err(self.domain("sqrt of negative argument"));
                }
                let s = v.sqrt();
                a.chain(s, 0.5 / s, -0.25 / (s * v))
            }
            UnaryOp::Tanh => {
                let t = v.tanh();
                let sech2 = 1.0 - t * t;
                a.chain(t, sech2, -2.0 * t * sech2)
            }
            UnaryOp::Sinh => a.chain(v.sinh(), v.cosh(), v.sinh()),
            UnaryOp::Cosh => a.chain(v.cosh(), v.sinh(), v.cosh()),
            UnaryOp::Atan => {
                let q = 1.0 + v * v;
                a.chain(v.atan(), 1.0 / q, -2.0 * v / (q * q))
            }
        })
    }

    fn pow(&self, base: S, exponent: &Expr) -> Result<S> {
        let v = base.value();
        if let Some(c) = exponent.constant_value() {
            if c.fract() == 0.0 && c.abs() <= MAX_INTEGER_EXPONENT {
                let k = c as i32;
                if v == 0.0 && k < 0 {
                    return Err(self.domain("division by zero in pow"));
                }
                return Ok(match k {
                    0 => S::constant(1.0),
                    1 => base,
                    _ => {
                        let kf = f64::from(k);
                        base.chain(v.powi(k), kf * v.powi(k - 1), kf * (kf - 1.0) * v.powi(k - 2))
                    }
                });
            }
            if !(v > 0.0) {
                return Err(self.domain("pow of non-positive base"));
            }
            return Ok(base.chain(v.powf(c), c * v.powf(c - 1.0), c * (c - 1.0) * v.powf(c - 2.0)));
        }
        if !(v > 0.0) {
            return Err(self.domain("pow of non-positive base"));
        }
        let exponent = self.eval(exponent)?;
        let log_base = base.chain(v.ln(), 1.0 / v, -1.0 / (v * v));
        let product = exponent * log_base;
        let e = product.value().exp();
        Ok(product.chain(e, e, e))
    }
}

/// A [`SmoothMap`] defined by expressions, differentiated with hyper-dual numbers.
#[derive(Clone, Debug)]
pub struct ExprMap {
    ast: MapAst,
    name: String,
}

/// Wraps a parsed map file as a [`SmoothMap`].
pub fn to_smooth_map(ast: MapAst) -> Result<ExprMap> {
    if ast.dim == 0 || ast.components.len() != ast.dim {
        return Err(Error::InvalidInput(format!(
            "map declares dim {} but has {} components",
            ast.dim,
            ast.components.len()
        )));
    }
    if let Some(bad) = ast.components.iter().map(Expr::max_var).find(|&k| k > ast.dim) {
        return Err(Error::InvalidInput(format!("variable x{bad} exceeds dim {}", ast.dim)));
    }
    Ok(ExprMap { ast, name: "expr".into() })
}

impl ExprMap {
    pub fn ast(&self) -> &MapAst {
        &self.ast
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn eval_components<S: Scalar>(&self, vars: &[S], x: &[f64]) -> Result<Vec<S>> {
        let ev = Evaluator { vars, point: x };
        self.ast.components.iter().map(|c| ev.eval(c)).collect()
    }

    fn seeded(x: &[f64], j: usize, k: usize) -> Vec<HyperDual> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                HyperDual::new(v, f64::from(u8::from(i == j)), f64::from(u8::from(i == k)), 0.0)
            })
            .collect()
    }

    /// Evaluates every component with `x_j` seeded along `ε₁` and `x_k`
    /// along `ε₂`.
    pub fn eval_seeded(&self, x: &[f64], j: usize, k: usize) -> Result<Vec<HyperDual>> {
        self.eval_components(&Self::seeded(x, j, k), x)
    }

    /// Value, Jacobian and second derivatives from `n(n+1)/2` hyper-dual passes.
    pub fn derivatives(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix, Tensor3)> {
        let n = self.ast.dim;
        let mut value = Vec::new();
        let mut jac = Matrix::zeros(n);
        let mut hess = Tensor3::zeros(n);
        for j in 0..n {
            for k in j..n {
                let out = self.eval_seeded(x, j, k)?;
                for (a, d) in out.iter().enumerate() {
                    hess[(a, j, k)] = d.d12;
                    hess[(a, k, j)] = d.d12;
                    if j == k {
                        jac[(a, j)] = d.d1;
                    }
                }
                if value.is_empty() {
                    value = out.iter().map(|d| d.v).collect();
                }
            }
        }
        Ok((value, jac, hess))
    }
}

impl SmoothMap for ExprMap {
    fn dim(&self) -> usize {
        self.ast.dim
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval_components(x, x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.ast.dim;
        let mut jac = Matrix::zeros(n);
        for j in 0..n {
            let vars: Vec<HyperDual> = x
                .iter()
                .enumerate()
                .map(|(i, &v)| HyperDual::new(v, f64::from(u8::from(i == j)), 0.0, 0.0))
                .collect();
            for (a, d) in self.eval_components(&vars, x)?.iter().enumerate() {
                jac[(a, j)] = d.d1;
            }
        }
        Ok(jac)
    }

    fn second_derivative(&self, x: &[f64]) -> Result<Tensor3> {
        Ok(self.derivatives(x)?.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(text: &str) -> ExprMap {
        to_smooth_map(parse(text).unwrap()).unwrap()
    }

    #[test]
    fn square_derivatives() {
        let (v, j, h) = map("dim 1\nf1 = x1^2").derivatives(&[3.0]).unwrap();
        assert_eq!((v[0], j[(0, 0)], h[(0, 0, 0)]), (9.0, 6.0, 2.0));
    }

    #[test]
    fn sine_derivatives() {
        let (v, j, h) = map("dim 1\nf1 = sin(x1)").derivatives(&[std::f64::consts::FRAC_PI_2]).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(j[(0, 0)].abs() < 1e-16);
        assert_eq!(h[(0, 0, 0)], -1.0);
    }

    #[test]
    fn domain_errors_name_the_point() {
        let f = map("dim 1\nf1 = log(x1)");
        assert_eq!(
            f.eval(&[-1.0]).unwrap_err(),
            Error::Domain { op: "log of non-positive argument".into(), point: vec![-1.0] }
        );
        assert!(matches!(map("dim 1\nf1 = 1/x1").jacobian(&[0.0]), Err(Error::Domain { .. })));
        assert!(matches!(map("dim 1\nf1 = sqrt(x1)").eval(&[-4.0]), Err(Error::Domain { .. })));
        assert_eq!(map("dim 1\nf1 = sqrt(x1)").eval(&[0.0]).unwrap(), vec![0.0]);
        assert!(matches!(map("dim 1\nf1 = sqrt(x1)").jacobian(&[0.0]), Err(Error::Domain { .. })));
        assert!(matches!(map("dim 1\nf1 = exp(exp(x1))").eval(&[10.0]), Err(Error::Domain { .. })));
        assert!(matches!(map("dim 1\nf1 = x1^x1").eval(&[-1.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn powers() {
        let f = map("dim 1\nf1 = x1^-2 + (-x1)^3 + x1^0.5 + 2^x1");
        let x = 1.3f64;
        let (v, j, h) = f.derivatives(&[x]).unwrap();
        let expected = x.powi(-2) - x.powi(3) + x.sqrt() + 2f64.powf(x);
        let d1 = -2.0 * x.powi(-3) - 3.0 * x * x + 0.5 / x.sqrt() + 2f64.ln() * 2f64.powf(x);
        let d2 = 6.0 * x.powi(-4) - 6.0 * x - 0.25 * x.powf(-1.5) + 2f64.ln().powi(2) * 2f64.powf(x);
        assert!((v[0] - expected).abs() < 1e-13);
        assert!((j[(0, 0)] - d1).abs() < 1e-13);
        assert!((h[(0, 0, 0)] - d2).abs() < 1e-12);
        // negative base with integer exponent is fine
        assert_eq!(map("dim 1\nf1 = x1^3").eval(&[-2.0]).unwrap(), vec![-8.0]);
    }

    #[test]
    fn mixed_partials() {
        let f = map("dim 2\nf1 = x1*x2^2\nf2 = sin(x1*x2)");
        let x = [0.7, -1.1];
        let h = f.second_derivative(&x).unwrap();
        assert!((h[(0, 0, 1)] - 2.0 * x[1]).abs() < 1e-15);
        assert!((h[(0, 1, 1)] - 2.0 * x[0]).abs() < 1e-15);
        let p = x[0] * x[1];
        assert!((h[(1, 0, 1)] - (p.cos() - p * p.sin())).abs() < 1e-15);
        assert_eq!(h.max_asymmetry(), 0.0);
        let ab = f.eval_seeded(&x, 0, 1).unwrap();
        let ba = f.eval_seeded(&x, 1, 0).unwrap();
        assert_eq!(ab[1].d12.to_bits(), ba[1].d12.to_bits());
    }

    #[test]
    fn rejects_inconsistent_ast() {
        let ast = MapAst { dim: 1, components: vec![Expr::Var(2)] };
        assert!(to_smooth_map(ast).is_err());
        let ast = MapAst { dim: 2, components: vec![Expr::Var(1)] };
        assert!(to_smooth_map(ast).is_err());
    }

    #[test]
    fn printing_is_canonical() {
        let ast = parse("dim 1\nf1 = -x1^2 + 3*sin(x1)/e").unwrap();
        let text = ast.to_string();
        assert_eq!(text, format!("dim 1\nf1 = ((-(x1^2.0))+((3.0*sin(x1))/{:?}))\n", std::f64::consts::E));
        assert_eq!(parse(&text).unwrap(), ast);
    }
}
