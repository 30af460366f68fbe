//! Riemannian geometry of the pullback metric `g(u, v) = ⟨Df u, Df v⟩`.
//!
//! Under `g` the map `f` is a local isometry onto Euclidean space, so a
//! geodesic `γ` satisfies `(f∘γ)'' = 0`: its image is a straight line
//! traversed at constant speed. Differentiating gives
//! `Df γ'' + D²f(γ', γ') = 0`, i.e. `Γᵏᵢⱼ = Σ_a (Df⁻¹)ₖₐ ∂²f_a/∂xᵢ∂xⱼ`
//! (the pushforward formula). The Levi-Civita formula from metric
//! derivatives is kept as an independent cross-check.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::map_model::SmoothMap;
use crate::numerics::ode::{
    integrate_adaptive, OdeProblem, DEFAULT_ATOL, DEFAULT_MAX_STEPS, DEFAULT_RTOL,
    DEFAULT_STATE_BOUND,
};
use crate::numerics::vector::{axpy, check_dim, dot, norm, sub};
use crate::numerics::{sigma_min, Lu, Matrix, Tensor3};

/// Jacobians with a smaller singular value are treated as singular.
pub const SIGMA_SINGULAR: f64 = 1e-8;

/// `G(x) = J(x)ᵀ J(x)` at `base_point`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTensor {
    pub g: Matrix,
    pub base_point: Vec<f64>,
}

impl MetricTensor {
    /// `uᵀ G v`
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.g.mul_vec(v))
    }
}

/// Connection coefficients `gamma[(k, i, j)] = Γᵏᵢⱼ` at `base_point`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChristoffelTensor {
    pub gamma: Tensor3,
    pub base_point: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeodesicState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl GeodesicState {
    fn from_flat(y: &[f64]) -> Self {
        let n = y.len() / 2;
        GeodesicState { position: y[..n].to_vec(), velocity: y[n..].to_vec() }
    }
}

/// Recorded path `t ↦ (γ(t), γ'(t))` at the accepted integration steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GeodesicTrace {
    pub t: Vec<f64>,
    pub position: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
}

impl GeodesicTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_position(&self) -> Option<&[f64]> {
        self.position.last().map(Vec::as_slice)
    }

    pub fn final_state(&self) -> Option<GeodesicState> {
        Some(GeodesicState {
            position: self.position.last()?.clone(),
            velocity: self.velocity.last()?.clone(),
        })
    }

    pub fn states(&self) -> impl Iterator<Item = GeodesicState> + '_ {
        self.position
            .iter()
            .zip(&self.velocity)
            .map(|(p, v)| GeodesicState { position: p.clone(), velocity: v.clone() })
    }

    /// Writes the trace as CSV with columns
    /// `t, pos_1..pos_n, vel_1..vel_n, speed, image_1..image_n`.
    pub fn write_csv<W: Write>(&self, map: &dyn SmoothMap, out: W) -> Result<()> {
        let n = map.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("pos_{i}")));
        header.extend((1..=n).map(|i| format!("vel_{i}")));
        header.push("speed".into());
        header.extend((1..=n).map(|i| format!("image_{i}")));
        w.write_record(&header)?;
        for (k, state) in self.states().enumerate() {
            let mut row = vec![self.t[k]];
            row.extend(&state.position);
            row.extend(&state.velocity);
            row.push(speed(map, &state)?);
            row.extend(map.eval(&state.position)?);
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integration failure of a geodesic, with the part of the path computed.
#[derive(Clone, Debug)]
pub struct TraceFailure {
    pub error: Error,
    pub partial: GeodesicTrace,
}

impl std::fmt::Display for TraceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

/// Integrator settings shared by geodesic and continuation paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathTolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub state_bound: f64,
}

impl Default for PathTolerances {
    fn default() -> Self {
        PathTolerances {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            max_steps: DEFAULT_MAX_STEPS,
            state_bound: DEFAULT_STATE_BOUND,
        }
    }
}

/// Jacobian at `x`, rejected when its smallest singular value is below
/// [`SIGMA_SINGULAR`].
pub fn checked_jacobian(map: &dyn SmoothMap, x: &[f64]) -> Result<Matrix> {
    let j = map.jacobian(x)?;
    if !j.is_finite() || !(sigma_min(&j) >= SIGMA_SINGULAR) {
        return Err(Error::SingularJacobian { t: None, position: x.to_vec() });
    }
    Ok(j)
}

pub fn metric_tensor(map: &dyn SmoothMap, x: &[f64]) -> Result<MetricTensor> {
    check_dim(x, map.dim())?;
    Ok(MetricTensor { g: map.jacobian(x)?.gram(), base_point: x.to_vec() })
}

/// Christoffel symbols from derivatives of the metric,
/// `Γᵏᵢⱼ = ½ gᵏˡ (∂ᵢg_jl + ∂ⱼg_il − ∂ₗg_ij)` with
/// `∂ₘg_ij = Σ_a (H[a][m][i] J[a][j] + J[a][i] H[a][m][j])`.
pub fn christoffel_metric(map: &dyn SmoothMap, x: &[f64]) -> Result<ChristoffelTensor> {
    check_dim(x, map.dim())?;
    let n = map.dim();
    let j = checked_jacobian(map, x)?;
    let h = map.second_derivative(x)?;
    let g = Lu::factor(&j.gram()).map_err(|e| e.at_point(x))?;

    // dg[(m, i, l)] = ∂ₘ g_il
    let mut dg = Tensor3::zeros(n);
    for m in 0..n {
        for i in 0..n {
            for l in 0..n {
                dg[(m, i, l)] = (0..n).map(|a| h[(a, m, i)] * j[(a, l)] + j[(a, i)] * h[(a, m, l)]).sum();
            }
        }
    }

    let mut gamma = Tensor3::zeros(n);
    for i in 0..n {
        for jj in 0..n {
            let rhs: Vec<f64> = (0..n)
                .map(|l| 0.5 * (dg[(i, jj, l)] + dg[(jj, i, l)] - dg[(l, i, jj)]))
                .collect();
            for (k, v) in g.solve(&rhs).into_iter().enumerate() {
                gamma[(k, i, jj)] = v;
            }
        }
    }
    Ok(ChristoffelTensor { gamma, base_point: x.to_vec() })
}

/// Christoffel symbols from the local-isometry identity,
/// `Γᵏᵢⱼ = Σ_a (J⁻¹)ₖₐ H[a][i][j]`; symmetric in `(i, j)` by construction.
pub fn christoffel_pushforward(map: &dyn SmoothMap, x: &[f64]) -> Result<ChristoffelTensor> {
    check_dim(x, map.dim())?;
    let n = map.dim();
    let lu = Lu::factor(&checked_jacobian(map, x)?).map_err(|e| e.at_point(x))?;
    let h = map.second_derivative(x)?;
    let mut gamma = Tensor3::zeros(n);
    for i in 0..n {
        for j in i..n {
            let column: Vec<f64> = (0..n).map(|a| h[(a, i, j)]).collect();
            for (k, v) in lu.solve(&column).into_iter().enumerate() {
                gamma[(k, i, j)] = v;
                gamma[(k, j, i)] = v;
            }
        }
    }
    Ok(ChristoffelTensor { gamma, base_point: x.to_vec() })
}

/// Right-hand side of the geodesic equation: returns `(γ', γ'')` with
/// `γ''ᵏ = −Γᵏᵢⱼ γ'ⁱ γ'ʲ`, evaluated as `−J⁻¹ H(γ', γ')` with one solve.
pub fn geodesic_rhs(map: &dyn SmoothMap, s: &GeodesicState) -> Result<GeodesicState> {
    check_dim(&s.position, map.dim())?;
    check_dim(&s.velocity, map.dim())?;
    let x = &s.position;
    let lu = Lu::factor(&checked_jacobian(map, x)?).map_err(|e| e.at_point(x))?;
    let hvv = map.second_derivative(x)?.contract_twice(&s.velocity);
    let acceleration = lu.solve(&hvv).into_iter().map(|a| -a).collect();
    Ok(GeodesicState { position: s.velocity.clone(), velocity: acceleration })
}

/// `sqrt(g(γ', γ')) = |J(γ) γ'|`
pub fn speed(map: &dyn SmoothMap, s: &GeodesicState) -> Result<f64> {
    check_dim(&s.position, map.dim())?;
    Ok(norm(&map.jacobian(&s.position)?.mul_vec(&s.velocity)))
}

/// Integrates the geodesic from `p` with initial velocity `u` over
/// `[0, t_end]`; the final position is `exp_p(t_end · u)`.
pub fn exp_map(
    map: &dyn SmoothMap,
    p: &[f64],
    u: &[f64],
    t_end: f64,
    tol: &PathTolerances,
) -> Result<GeodesicTrace, Box<TraceFailure>> {
    let fail = |error: Error| Box::new(TraceFailure { error, partial: GeodesicTrace::default() });
    let n = map.dim();
    check_dim(p, n).and_then(|_| check_dim(u, n)).map_err(fail)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(fail(Error::InvalidInput("t_end must be positive".into())));
    }
    checked_jacobian(map, p).map_err(|e| fail(e.at_t(0.0)))?;

    if u.iter().all(|&v| v == 0.0) {
        return Ok(GeodesicTrace {
            t: vec![0.0, t_end],
            position: vec![p.to_vec(), p.to_vec()],
            velocity: vec![u.to_vec(), u.to_vec()],
        });
    }

    let y0 = [p, u].concat();
    let rhs = |_: f64, y: &[f64]| -> Result<Vec<f64>> {
        let d = geodesic_rhs(map, &GeodesicState::from_flat(y))?;
        Ok([d.position, d.velocity].concat())
    };
    let problem = OdeProblem::new(rhs, 0.0, t_end, y0)
        .with_tolerances(tol.rtol, tol.atol)
        .with_max_steps(tol.max_steps)
        .with_state_bound(tol.state_bound);

    let to_trace = |traj: crate::numerics::Trajectory| {
        let mut trace = GeodesicTrace::default();
        for (t, y) in traj.times.into_iter().zip(traj.states) {
            trace.t.push(t);
            trace.position.push(y[..n].to_vec());
            trace.velocity.push(y[n..].to_vec());
        }
        trace
    };
    integrate_adaptive(&problem).map(to_trace).map_err(|f| {
        let f = *f;
        Box::new(TraceFailure { error: f.error.truncate_position(n), partial: to_trace(f.partial) })
    })
}

/// Largest `|speed(t) − speed(0)| / speed(0)` along a trace.
pub fn speed_drift(map: &dyn SmoothMap, trace: &GeodesicTrace) -> Result<f64> {
    let speeds = trace.states().map(|s| speed(map, &s)).collect::<Result<Vec<_>>>()?;
    let Some(&s0) = speeds.first() else { return Ok(0.0) };
    if s0 == 0.0 {
        return Ok(speeds.iter().fold(0.0, |m, s| m.max(s.abs())));
    }
    Ok(speeds.iter().map(|s| (s - s0).abs() / s0).fold(0.0, f64::max))
}

/// Largest distance between `f(γ(t))` and the line `f(p) + t·J(p)γ'(0)`.
pub fn line_deviation(map: &dyn SmoothMap, trace: &GeodesicTrace) -> Result<f64> {
    let Some(s0) = trace.states().next() else { return Ok(0.0) };
    let f0 = map.eval(&s0.position)?;
    let w = map.jacobian(&s0.position)?.mul_vec(&s0.velocity);
    let mut worst: f64 = 0.0;
    for (t, x) in trace.t.iter().zip(&trace.position) {
        let expected = axpy(&f0, *t, &w);
        worst = worst.max(norm(&sub(&map.eval(x)?, &expected)));
    }
    Ok(worst)
}
