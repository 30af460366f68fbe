//! Global inversion `x̂ = f⁻¹(y)` along the path whose image is the segment
//! from `f(x0)` to `y`.
//!
//! Two routes produce the same curve `γ` with `f(γ(t)) = (1 − t) f(x0) + t y`:
//!
//! * continuation integrates the first-order equation `γ' = Df(γ)⁻¹ (y − f(x0))`;
//! * geodesic shooting integrates the geodesic of the pullback metric from
//!   `x0` with initial velocity `u = Df(x0)⁻¹ (y − f(x0))`.
//!
//! Both endpoints are refined by damped Newton iteration. When `y` is not in
//! the image the path escapes to infinity or runs into a critical point, and
//! the report carries that failure instead of a solution.

mod hadamard;

pub use hadamard::{
    estimate_hadamard, lipschitz_probe, HadamardEstimate, LipschitzProbe, LipschitzViolation,
    REFINE_ITERATIONS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_model::SmoothMap;
use crate::numerics::ode::{integrate_adaptive, OdeProblem, Trajectory};
use crate::numerics::vector::{check_dim, check_point, distance_to_segment, norm, sub};
use crate::numerics::Lu;
use crate::pullback_geometry::{checked_jacobian, exp_map, GeodesicTrace, PathTolerances};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_POLISH_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_POLISH_ITERS: usize = 20;
pub const MAX_HALVINGS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Geodesic,
    Continuation,
    Auto,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" => Ok(Method::Geodesic),
            "continuation" => Ok(Method::Continuation),
            "auto" => Ok(Method::Auto),
            _ => Err(Error::InvalidInput(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InversionOptions {
    pub method: Method,
    pub path: PathTolerances,
    /// Target for `|f(x̂) − y|`.
    pub polish_tol: f64,
    pub max_polish_iters: usize,
    /// Starting point of the path; the origin when `None`.
    pub x0: Option<Vec<f64>>,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            method: Method::Auto,
            path: PathTolerances::default(),
            polish_tol: DEFAULT_POLISH_TOL,
            max_polish_iters: DEFAULT_MAX_POLISH_ITERS,
            x0: None,
        }
    }
}

impl InversionOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    fn validate(&self) -> Result<()> {
        let p = &self.path;
        if !(p.rtol > 0.0 && p.atol > 0.0 && p.state_bound > 0.0) {
            return Err(Error::InvalidInput("tolerances and state bound must be positive".into()));
        }
        if !(self.polish_tol >= f64::EPSILON) {
            return Err(Error::InvalidInput("polish tolerance must be at least machine epsilon".into()));
        }
        Ok(())
    }
}

/// Why an inversion did not produce a verified preimage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub kind: String,
    pub t: Option<f64>,
    pub position: Option<Vec<f64>>,
    pub message: String,
}

impl From<&Error> for Failure {
    fn from(e: &Error) -> Self {
        Failure {
            kind: e.kind().to_string(),
            t: e.t(),
            position: e.position().map(<[f64]>::to_vec),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InversionReport {
    pub schema_version: u32,
    /// Polished preimage, or the last point reached when `failure` is set.
    pub solution: Vec<f64>,
    /// `|f(solution) − y|`
    pub residual: f64,
    pub method_used: Method,
    pub ode_steps: usize,
    pub polish_iters: usize,
    /// Path from `x0`; on success it ends at the pre-polish endpoint.
    pub trace: GeodesicTrace,
    /// Largest distance from `f(γ(t))` to the segment `[f(x0), y]`.
    pub straightness_deviation: f64,
    pub failure: Option<Failure>,
    #[serde(skip)]
    pub error: Option<Error>,
}

impl InversionReport {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    /// Path endpoint before Newton refinement.
    pub fn pre_polish(&self) -> Option<&[f64]> {
        self.trace.final_position()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Result of [`newton_polish`].
#[derive(Clone, Debug, PartialEq)]
pub struct Polished {
    pub x: Vec<f64>,
    pub iters: usize,
    /// `|f(x_k) − y|` for every iterate, starting with `x_init`.
    pub residuals: Vec<f64>,
}

/// Damped Newton iteration for `f(x) = y` from `x_init`, halving the step
/// (at most [`MAX_HALVINGS`] times) whenever the residual fails to decrease.
pub fn newton_polish(
    map: &dyn SmoothMap,
    y: &[f64],
    x_init: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Polished> {
    check_dim(y, map.dim())?;
    check_dim(x_init, map.dim())?;
    let residual_at = |x: &[f64]| -> Result<f64> { Ok(norm(&sub(&map.eval(x)?, y))) };

    let mut x = x_init.to_vec();
    let mut r = residual_at(&x)?;
    let mut residuals = vec![r];
    let mut iters = 0;
    while !(r <= tol) {
        let stalled = |x: Vec<f64>, r: f64, iters: usize| Error::ToleranceNotMet { residual: r, iters, position: x };
        if iters >= max_iters {
            return Err(stalled(x, r, iters));
        }
        let lu = Lu::factor(&map.jacobian(&x)?).map_err(|e| e.at_point(&x))?;
        let dx = lu.solve(&sub(&map.eval(&x)?, y));
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - lambda * d).collect();
            if let Ok(rt) = residual_at(&trial) {
                if rt < r {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        iters += 1;
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
                residuals.push(r);
            }
            None => return Err(stalled(x, r, iters)),
        }
    }
    Ok(Polished { x, iters, residuals })
}

struct PathOutcome {
    trace: GeodesicTrace,
    ode_steps: usize,
    error: Option<Error>,
}

struct Problem<'a> {
    map: &'a dyn SmoothMap,
    y: &'a [f64],
    x0: Vec<f64>,
    fx0: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(map: &'a dyn SmoothMap, y: &'a [f64], opts: &InversionOptions) -> Result<Self> {
        opts.validate()?;
        check_point(y)?;
        check_dim(y, map.dim())?;
        let x0 = opts.x0.clone().unwrap_or_else(|| vec![0.0; map.dim()]);
        check_point(&x0)?;
        check_dim(&x0, map.dim())?;
        let fx0 = map.eval(&x0)?;
        Ok(Problem { map, y, x0, fx0 })
    }

    fn displacement(&self) -> Vec<f64> {
        sub(self.y, &self.fx0)
    }

    fn continuation_path(&self, tol: &PathTolerances) -> PathOutcome {
        let b = self.displacement();
        if let Err(e) = checked_jacobian(self.map, &self.x0) {
            return self.stuck(e.at_t(0.0));
        }
        if b.iter().all(|&v| v == 0.0) {
            return self.stationary(b);
        }
        let rhs = |_: f64, x: &[f64]| -> Result<Vec<f64>> {
            let lu = Lu::factor(&self.map.jacobian(x)?).map_err(|e| e.at_point(x))?;
            Ok(lu.solve(&b))
        };
        let problem = OdeProblem::new(rhs, 0.0, 1.0, self.x0.clone())
            .with_tolerances(tol.rtol, tol.atol)
            .with_max_steps(tol.max_steps)
            .with_state_bound(tol.state_bound)
            .with_derivative_bound(tol.state_bound);
        let to_trace = |traj: Trajectory| GeodesicTrace {
            t: traj.times,
            position: traj.states,
            velocity: traj.derivatives,
        };
        match integrate_adaptive(&problem) {
            Ok(traj) => {
                let ode_steps = traj.accepted_steps();
                PathOutcome { trace: to_trace(traj), ode_steps, error: None }
            }
            Err(f) => {
                let f = *f;
                let ode_steps = f.partial.accepted_steps();
                PathOutcome { trace: to_trace(f.partial), ode_steps, error: Some(f.error) }
            }
        }
    }

    fn geodesic_path(&self, tol: &PathTolerances) -> PathOutcome {
        let b = self.displacement();
        let u = match checked_jacobian(self.map, &self.x0).and_then(|j| {
            Lu::factor(&j).map(|lu| lu.solve(&b)).map_err(|e| e.at_point(&self.x0))
        }) {
            Ok(u) => u,
            Err(e) => return self.stuck(e.at_t(0.0)),
        };
        match exp_map(self.map, &self.x0, &u, 1.0, tol) {
            Ok(trace) => {
                let ode_steps = trace.len().saturating_sub(1);
                PathOutcome { trace, ode_steps, error: None }
            }
            Err(f) => {
                let ode_steps = f.partial.len().saturating_sub(1);
                PathOutcome { trace: f.partial, ode_steps, error: Some(f.error) }
            }
        }
    }

    fn stationary(&self, zero: Vec<f64>) -> PathOutcome {
        let trace = GeodesicTrace {
            t: vec![0.0, 1.0],
            position: vec![self.x0.clone(), self.x0.clone()],
            velocity: vec![zero.clone(), zero],
        };
        PathOutcome { trace, ode_steps: 0, error: None }
    }

    fn stuck(&self, error: Error) -> PathOutcome {
        PathOutcome { trace: GeodesicTrace::default(), ode_steps: 0, error: Some(error) }
    }

    fn straightness(&self, trace: &GeodesicTrace) -> f64 {
        trace
            .position
            .iter()
            .map(|x| match self.map.eval(x) {
                Ok(fx) => distance_to_segment(&fx, &self.fx0, self.y),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    fn finish(&self, path: PathOutcome, method: Method, opts: &InversionOptions) -> InversionReport {
        let straightness_deviation = self.straightness(&path.trace);
        let endpoint = path.trace.final_position().unwrap_or(&self.x0).to_vec();
        let residual_at = |x: &[f64]| {
            self.map.eval(x).map(|fx| norm(&sub(&fx, self.y))).unwrap_or(f64::INFINITY)
        };
        let mut report = InversionReport {
            schema_version: SCHEMA_VERSION,
            residual: residual_at(&endpoint),
            solution: endpoint,
            method_used: method,
            ode_steps: path.ode_steps,
            polish_iters: 0,
            trace: path.trace,
            straightness_deviation,
            failure: None,
            error: None,
        };
        let error = match path.error {
            Some(e) => Some(e),
            None => match newton_polish(self.map, self.y, &report.solution, opts.polish_tol, opts.max_polish_iters)
            {
                Ok(p) => {
                    report.residual = *p.residuals.last().unwrap();
                    report.solution = p.x;
                    report.polish_iters = p.iters;
                    None
                }
                Err(e) => {
                    if let Error::ToleranceNotMet { iters, .. } = &e {
                        report.polish_iters = *iters;
                    }
                    Some(e)
                }
            },
        };
        if let Some(e) = error {
            report.failure = Some(Failure::from(&e));
            report.error = Some(e);
        }
        report
    }
}

/// Inverts by integrating `γ' = Df(γ)⁻¹ (y − f(x0))` over `[0, 1]`.
///
/// Only invalid inputs are returned as `Err`; solver failures are recorded
/// in the report.
pub fn invert_continuation(map: &dyn SmoothMap, y: &[f64], opts: &InversionOptions) -> Result<InversionReport> {
    let problem = Problem::new(map, y, opts)?;
    let path = problem.continuation_path(&opts.path);
    Ok(problem.finish(path, Method::Continuation, opts))
}

/// Inverts by shooting the pullback-metric geodesic from `x0` with initial
/// velocity `Df(x0)⁻¹ (y − f(x0))` and reading off `γ(1)`.
pub fn invert_geodesic(map: &dyn SmoothMap, y: &[f64], opts: &InversionOptions) -> Result<InversionReport> {
    let problem = Problem::new(map, y, opts)?;
    let path = problem.geodesic_path(&opts.path);
    Ok(problem.finish(path, Method::Geodesic, opts))
}

/// Dispatches on `opts.method`. `Auto` runs continuation and falls back to
/// the geodesic route when the Newton polish does not converge.
pub fn invert(map: &dyn SmoothMap, y: &[f64], opts: &InversionOptions) -> Result<InversionReport> {
    match opts.method {
        Method::Continuation => invert_continuation(map, y, opts),
        Method::Geodesic => invert_geodesic(map, y, opts),
        Method::Auto => {
            let report = invert_continuation(map, y, opts)?;
            if matches!(report.error, Some(Error::ToleranceNotMet { .. })) {
                invert_geodesic(map, y, opts)
            } else {
                Ok(report)
            }
        }
    }
}
