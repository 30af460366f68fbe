//! Dormand–Prince 5(4) integrator with proportional-integral step control.
//!
//! Local error is measured in the weighted RMS norm with weights
//! `atol + rtol * max(|y|, |y_new|)`. The last stage is evaluated at the
//! accepted point and reused as the first stage of the next step (FSAL).

use crate::error::{Error, Result};

use super::vector::norm;

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
pub const DEFAULT_MAX_STEPS: usize = 100_000;
pub const DEFAULT_STATE_BOUND: f64 = 1e8;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Step controller.
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const STAGE_FAILURE_SHRINK: f64 = 0.25;

/// An initial value problem `y' = rhs(t, y)`, `y(t0) = y0`, on `[t0, t1]`.
pub struct OdeProblem<F> {
    pub rhs: F,
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// The path is declared divergent once `|y|` exceeds this radius.
    pub state_bound: f64,
    /// Same for `|y'|`; unbounded unless set.
    pub derivative_bound: f64,
}

impl<F> OdeProblem<F>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    pub fn new(rhs: F, t0: f64, t1: f64, y0: Vec<f64>) -> Self {
        OdeProblem {
            rhs,
            t0,
            t1,
            y0,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            max_steps: DEFAULT_MAX_STEPS,
            state_bound: DEFAULT_STATE_BOUND,
            derivative_bound: f64::INFINITY,
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_state_bound(mut self, state_bound: f64) -> Self {
        self.state_bound = state_bound;
        self
    }

    pub fn with_derivative_bound(mut self, derivative_bound: f64) -> Self {
        self.derivative_bound = derivative_bound;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if !(self.t0 < self.t1) || !self.t0.is_finite() || !self.t1.is_finite() {
            return bad("integration interval must satisfy t0 < t1");
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.y0.is_empty() || self.y0.iter().any(|v| !v.is_finite()) {
            return bad("initial state must be non-empty and finite");
        }
        if !(self.state_bound > norm(&self.y0)) {
            return bad("state bound must exceed the norm of the initial state");
        }
        Ok(())
    }
}

/// Accepted steps of an integration, including both endpoints on success.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `rhs(t, y)` at every recorded point.
    pub derivatives: Vec<Vec<f64>>,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
}

impl Trajectory {
    pub fn accepted_steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<(f64, &[f64])> {
        Some((*self.times.last()?, self.states.last()?.as_slice()))
    }

    fn push(&mut self, t: f64, y: Vec<f64>, dy: Vec<f64>) {
        self.times.push(t);
        self.states.push(y);
        self.derivatives.push(dy);
    }
}

/// Integration failure together with the steps accepted before it.
#[derive(Clone, Debug)]
pub struct IntegrationFailure {
    pub error: Error,
    pub partial: Trajectory,
}

/// Integrates `problem` over `[t0, t1]` and returns every accepted step.
///
/// Right-hand side errors (and non-finite values) at intermediate stages
/// reject the step and shrink it. The path is reported as
/// [`Error::PathDiverged`] when `|y|` or `|y'|` leaves its bound or the step
/// size underflows; if the rejections leading to underflow were caused by a
/// right-hand side error, that error is reported instead.
pub fn integrate_adaptive<F>(problem: &OdeProblem<F>) -> Result<Trajectory, Box<IntegrationFailure>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let mut traj = Trajectory::default();
    let fail = |error: Error, traj: Trajectory| Box::new(IntegrationFailure { error, partial: traj });
    if let Err(e) = problem.validate() {
        return Err(fail(e, traj));
    }

    let n = problem.y0.len();
    let (t0, t1) = (problem.t0, problem.t1);
    let (rtol, atol) = (problem.rtol, problem.atol);
    let eval = |t: f64, y: &[f64], traj: &mut Trajectory| -> Result<Vec<f64>> {
        traj.rhs_evals += 1;
        let dy = (problem.rhs)(t, y).map_err(|e| e.at_t(t))?;
        if dy.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: dy.len() });
        }
        Ok(dy)
    };

    let mut t = t0;
    let mut y = problem.y0.clone();
    let mut k1 = match eval(t, &y, &mut traj) {
        Ok(k) if k.iter().all(|v| v.is_finite()) => k,
        Ok(_) => {
            return Err(fail(Error::PathDiverged { t, position: y.clone() }, traj));
        }
        Err(e) => return Err(fail(e, traj)),
    };
    traj.push(t, y.clone(), k1.clone());

    let mut h = initial_step(problem, &y, &k1, &mut traj);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut stage_error: Option<Error> = None;
    let mut attempts = 0usize;

    let weighted = |y: &[f64], y_new: &[f64], err: &[f64]| -> f64 {
        let s: f64 = (0..n)
            .map(|i| {
                let sk = atol + rtol * y[i].abs().max(y_new[i].abs());
                (err[i] / sk).powi(2)
            })
            .sum();
        (s / n as f64).sqrt()
    };

    while t < t1 {
        if attempts >= problem.max_steps {
            let e = Error::MaxStepsExceeded { t, steps: attempts, position: y.clone() };
            return Err(fail(e, traj));
        }
        if h <= 10.0 * f64::EPSILON * t.abs().max(1.0) {
            let e = match stage_error.take() {
                Some(e) => e,
                None => Error::PathDiverged { t, position: y.clone() },
            };
            return Err(fail(e, traj));
        }
        attempts += 1;

        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }

        let step = try_step(&eval, t, &y, &k1, h, &mut traj);
        let (y_new, k7, err_vec) = match step {
            Ok(s) => s,
            Err(e) => {
                stage_error = e;
                traj.rejected_steps += 1;
                last_rejected = true;
                h *= STAGE_FAILURE_SHRINK;
                continue;
            }
        };

        let err = weighted(&y, &y_new, &err_vec);
        if !err.is_finite() {
            stage_error = None;
            traj.rejected_steps += 1;
            last_rejected = true;
            h *= STAGE_FAILURE_SHRINK;
            continue;
        }

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            stage_error = None;
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            t = if last { t1 } else { t + h };
            y = y_new;
            k1 = k7;
            traj.push(t, y.clone(), k1.clone());
            if norm(&y) > problem.state_bound || norm(&k1) > problem.derivative_bound {
                return Err(fail(Error::PathDiverged { t, position: y }, traj));
            }
            h = h_new;
            last_rejected = false;
        } else {
            stage_error = None;
            traj.rejected_steps += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
    Ok(traj)
}

type StepResult = std::result::Result<(Vec<f64>, Vec<f64>, Vec<f64>), Option<Error>>;

/// One Dormand–Prince trial step. Returns `(y_new, rhs(y_new), error vector)`
/// or the stage failure (`None` for non-finite stage values).
fn try_step<E>(eval: &E, t: f64, y: &[f64], k1: &[f64], h: f64, traj: &mut Trajectory) -> StepResult
where
    E: Fn(f64, &[f64], &mut Trajectory) -> Result<Vec<f64>>,
{
    let n = y.len();
    let stage = |coefs: &[(f64, &[f64])]| -> Vec<f64> {
        (0..n)
            .map(|i| y[i] + h * coefs.iter().map(|(a, k)| a * k[i]).sum::<f64>())
            .collect()
    };
    let run = |tt: f64, yy: &[f64], traj: &mut Trajectory| -> std::result::Result<Vec<f64>, Option<Error>> {
        if yy.iter().any(|v| !v.is_finite()) {
            return Err(None);
        }
        let k = eval(tt, yy, traj).map_err(Some)?;
        if k.iter().any(|v| !v.is_finite()) {
            return Err(None);
        }
        Ok(k)
    };

    let k2 = run(t + C2 * h, &stage(&[(A21, k1)]), traj)?;
    let k3 = run(t + C3 * h, &stage(&[(A31, k1), (A32, &k2)]), traj)?;
    let k4 = run(t + C4 * h, &stage(&[(A41, k1), (A42, &k2), (A43, &k3)]), traj)?;
    let k5 = run(t + C5 * h, &stage(&[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]), traj)?;
    let k6 = run(
        t + h,
        &stage(&[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        traj,
    )?;
    let y_new = stage(&[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = run(t + h, &y_new, traj)?;
    let err: Vec<f64> = (0..n)
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    Ok((y_new, k7, err))
}

/// Starting step size from the local behaviour of the solution.
fn initial_step<F>(problem: &OdeProblem<F>, y0: &[f64], f0: &[f64], traj: &mut Trajectory) -> f64
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let span = problem.t1 - problem.t0;
    let sk: Vec<f64> = y0.iter().map(|v| problem.atol + problem.rtol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&sk).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);

    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    traj.rhs_evals += 1;
    let f1 = match (problem.rhs)(problem.t0 + h0, &y1) {
        Ok(f1) if f1.len() == f0.len() && f1.iter().all(|v| v.is_finite()) => f1,
        _ => return h0,
    };
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dmax).powf(0.2) };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rhs_keeps_state() {
        let p = OdeProblem::new(|_, y: &[f64]| Ok(vec![0.0; y.len()]), 0.0, 1.0, vec![1.0, 2.0]);
        let traj = integrate_adaptive(&p).unwrap();
        assert_eq!(traj.last().unwrap(), (1.0, &[1.0, 2.0][..]));
        assert_eq!(traj.times[0], 0.0);
    }

    #[test]
    fn exponential_growth() {
        let p = OdeProblem::new(|_, y: &[f64]| Ok(y.to_vec()), 0.0, 1.0, vec![1.0])
            .with_tolerances(1e-10, 1e-12);
        let traj = integrate_adaptive(&p).unwrap();
        let (t, y) = traj.last().unwrap();
        assert_eq!(t, 1.0);
        assert!((y[0] - std::f64::consts::E).abs() < 1e-8, "{}", y[0]);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn blow_up_diverges() {
        let p = OdeProblem::new(|_, y: &[f64]| Ok(vec![y[0] * y[0]]), 0.0, 2.0, vec![1.0])
            .with_state_bound(1e6);
        let failure = integrate_adaptive(&p).unwrap_err();
        match failure.error {
            Error::PathDiverged { t, .. } => assert!((t - 1.0).abs() < 1e-3, "t = {t}"),
            e => panic!("unexpected {e:?}"),
        }
        assert!(!failure.partial.times.is_empty());
    }

    #[test]
    fn step_limit() {
        let p = OdeProblem::new(|t, _: &[f64]| Ok(vec![(100.0 * t).cos()]), 0.0, 100.0, vec![0.0])
            .with_max_steps(10);
        let failure = integrate_adaptive(&p).unwrap_err();
        assert!(matches!(failure.error, Error::MaxStepsExceeded { .. }));
    }

    #[test]
    fn rhs_error_at_start_propagates() {
        let p = OdeProblem::new(
            |_, _: &[f64]| Err(Error::SingularJacobian { t: None, position: vec![0.0] }),
            0.0,
            1.0,
            vec![0.0],
        );
        let failure = integrate_adaptive(&p).unwrap_err();
        assert_eq!(failure.error, Error::SingularJacobian { t: Some(0.0), position: vec![0.0] });
    }

    #[test]
    fn rhs_error_region_is_reported_on_underflow() {
        // The right-hand side refuses to be evaluated beyond y = 0.5.
        let p = OdeProblem::new(
            |_, y: &[f64]| {
                if y[0] > 0.5 {
                    Err(Error::SingularJacobian { t: None, position: y.to_vec() })
                } else {
                    Ok(vec![1.0])
                }
            },
            0.0,
            1.0,
            vec![0.0],
        );
        let failure = integrate_adaptive(&p).unwrap_err();
        match failure.error {
            Error::SingularJacobian { t: Some(t), .. } => assert!((t - 0.5).abs() < 1e-6),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invalid_problems() {
        let rhs = |_, y: &[f64]| Ok(y.to_vec());
        assert!(integrate_adaptive(&OdeProblem::new(rhs, 1.0, 0.0, vec![1.0])).is_err());
        assert!(integrate_adaptive(&OdeProblem::new(rhs, 0.0, 1.0, vec![1.0]).with_state_bound(0.5))
            .is_err());
        assert!(integrate_adaptive(&OdeProblem::new(rhs, 0.0, 1.0, vec![1.0]).with_tolerances(0.0, 1.0))
            .is_err());
    }

    #[test]
    fn derivative_bound_catches_speed_blow_up() {
        // y = -ln(1 - t) stays small while y' = e^y explodes at t = 1.
        let rhs = |_: f64, y: &[f64]| Ok(vec![y[0].exp()]);
        let free = integrate_adaptive(&OdeProblem::new(rhs, 0.0, 0.999, vec![0.0])).unwrap();
        assert!(free.last().unwrap().1[0] < 7.0);
        let bounded = OdeProblem::new(rhs, 0.0, 1.0, vec![0.0]).with_derivative_bound(1e6);
        match integrate_adaptive(&bounded).unwrap_err().error {
            Error::PathDiverged { t, position } => {
                assert!(1.0 - t < 1e-5, "t = {t}");
                assert!(position[0] > 11.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
