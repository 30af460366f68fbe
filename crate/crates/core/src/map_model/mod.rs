//! C² maps `f: ℝⁿ → ℝⁿ` with value, Jacobian and second-derivative tensor.

mod builtin;

pub use builtin::{make_builtin, BuiltinMap, BuiltinMapId};

use crate::error::Result;
use crate::numerics::vector::{check_dim, max_abs_diff};
use crate::numerics::{Matrix, Tensor3};

/// A twice continuously differentiable map of `ℝⁿ` into itself.
///
/// Implementations must supply exact derivatives: `jacobian(x)[(i, j)]` is
/// `∂f_i/∂x_j` and `second_derivative(x)[(a, i, j)]` is `∂²f_a/∂x_i∂x_j`,
/// symmetric in `(i, j)`. Inputs are assumed to have length [`dim`](Self::dim);
/// the free functions in this module check it.
pub trait SmoothMap: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn jacobian(&self, x: &[f64]) -> Result<Matrix>;

    fn second_derivative(&self, x: &[f64]) -> Result<Tensor3>;

    fn name(&self) -> String {
        format!("map(n={})", self.dim())
    }
}

pub fn eval(map: &dyn SmoothMap, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(x, map.dim())?;
    map.eval(x)
}

pub fn jacobian(map: &dyn SmoothMap, x: &[f64]) -> Result<Matrix> {
    check_dim(x, map.dim())?;
    map.jacobian(x)
}

pub fn second_derivative(map: &dyn SmoothMap, x: &[f64]) -> Result<Tensor3> {
    check_dim(x, map.dim())?;
    map.second_derivative(x)
}

/// Max-norm discrepancies between central differences of `eval` and the
/// analytic derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdCheck {
    pub jac_error: f64,
    pub hess_error: f64,
}

/// Compares the analytic Jacobian and second derivatives of `map` at `x`
/// against central finite differences of `eval` with step `h`.
pub fn fd_check(map: &dyn SmoothMap, x: &[f64], h: f64) -> Result<FdCheck> {
    if !(h > 0.0) {
        return Err(crate::Error::InvalidInput("finite-difference step must be positive".into()));
    }
    check_dim(x, map.dim())?;
    let n = map.dim();
    let jac = map.jacobian(x)?;
    let hess = map.second_derivative(x)?;
    let f0 = map.eval(x)?;

    let shifted = |steps: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut p = x.to_vec();
        for &(i, s) in steps {
            p[i] += s;
        }
        map.eval(&p)
    };

    let mut jac_error: f64 = 0.0;
    let mut hess_error: f64 = 0.0;
    for j in 0..n {
        let fp = shifted(&[(j, h)])?;
        let fm = shifted(&[(j, -h)])?;
        for a in 0..n {
            let d = (fp[a] - fm[a]) / (2.0 * h);
            jac_error = jac_error.max((d - jac[(a, j)]).abs());
            let d2 = (fp[a] - 2.0 * f0[a] + fm[a]) / (h * h);
            hess_error = hess_error.max((d2 - hess[(a, j, j)]).abs());
        }
        for k in j + 1..n {
            let fpp = shifted(&[(j, h), (k, h)])?;
            let fpm = shifted(&[(j, h), (k, -h)])?;
            let fmp = shifted(&[(j, -h), (k, h)])?;
            let fmm = shifted(&[(j, -h), (k, -h)])?;
            for a in 0..n {
                let d2 = (fpp[a] - fpm[a] - fmp[a] + fmm[a]) / (4.0 * h * h);
                hess_error = hess_error.max((d2 - hess[(a, j, k)]).abs());
                hess_error = hess_error.max((d2 - hess[(a, k, j)]).abs());
            }
        }
    }
    Ok(FdCheck { jac_error, hess_error })
}

/// Largest entrywise difference between two maps' values, Jacobians and
/// second derivatives at `x`.
pub fn max_derivative_discrepancy(a: &dyn SmoothMap, b: &dyn SmoothMap, x: &[f64]) -> Result<f64> {
    let dv = max_abs_diff(&a.eval(x)?, &b.eval(x)?);
    let dj = a.jacobian(x)?.max_abs_diff(&b.jacobian(x)?);
    let dh = a.second_derivative(x)?.max_abs_diff(&b.second_derivative(x)?);
    Ok(dv.max(dj).max(dh))
}
