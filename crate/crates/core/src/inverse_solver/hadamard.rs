//! Sampled estimates of `inf σ_min(Df)²` and the lower-Lipschitz bound it
//! implies. Both are heuristics over a finite box: they can expose a
//! violated hypothesis but never certify it over all of ℝⁿ.

use serde::Serialize;

use super::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::map_model::SmoothMap;
use crate::numerics::svd::sigma_min;
use crate::numerics::vector::{check_dim, check_point, distance};
use crate::sampling::{seeded_rng, Interval, SearchBox};

/// Golden-section iterations per coordinate during refinement.
pub const REFINE_ITERATIONS: usize = 50;
const REFINE_SWEEPS: usize = 8;
const MAX_GRID_POINTS: usize = 20_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HadamardEstimate {
    pub schema_version: u32,
    /// Smallest sampled `σ_min(Df)²`.
    pub c_hat: f64,
    pub argmin: Vec<f64>,
    #[serde(rename = "box")]
    pub search_box: SearchBox,
    /// Grid plus random points evaluated, excluding refinement probes.
    pub samples: usize,
    pub refined: bool,
}

fn c_at(map: &dyn SmoothMap, x: &[f64]) -> Result<f64> {
    let s = sigma_min(&map.jacobian(x)?);
    Ok(s * s)
}

/// Keeps the first minimum seen, so ties resolve by visiting order.
struct Best {
    c: f64,
    x: Vec<f64>,
}

impl Best {
    fn offer(&mut self, c: f64, x: &[f64]) {
        if c < self.c {
            self.c = c;
            self.x = x.to_vec();
        }
    }
}

/// Minimizes `σ_min(Df)²` over `n_grid` points per axis (row-major, first
/// axis slowest) followed by `n_random` seeded uniform draws. With `refine`
/// the best sample seeds a golden-section coordinate descent restricted to
/// one grid cell around it on each axis.
pub fn estimate_hadamard(
    map: &dyn SmoothMap,
    search_box: &SearchBox,
    n_grid: usize,
    n_random: usize,
    refine: bool,
    seed: u64,
) -> Result<HadamardEstimate> {
    let n = map.dim();
    if search_box.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: search_box.dim() });
    }
    if n_grid < 2 {
        return Err(Error::InvalidInput("grid needs at least 2 points per axis".into()));
    }
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(n_grid).filter(|&t| t <= MAX_GRID_POINTS));
    let Some(total) = total else {
        return Err(Error::InvalidInput(format!(
            "{n_grid}^{n} grid points exceeds the limit of {MAX_GRID_POINTS}"
        )));
    };
    let axes = search_box.axes();
    let node = |iv: &Interval, k: usize| {
        if k == n_grid - 1 {
            iv.hi
        } else {
            iv.lo + (iv.hi - iv.lo) * k as f64 / (n_grid - 1) as f64
        }
    };

    let mut best = Best { c: f64::INFINITY, x: Vec::new() };
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    for _ in 0..total {
        for (d, iv) in axes.iter().enumerate() {
            x[d] = node(iv, idx[d]);
        }
        best.offer(c_at(map, &x)?, &x);
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < n_grid {
                break;
            }
            idx[d] = 0;
        }
    }
    let mut rng = seeded_rng(seed);
    for _ in 0..n_random {
        let x = search_box.sample(&mut rng);
        best.offer(c_at(map, &x)?, &x);
    }

    if refine {
        refine_argmin(map, axes, n_grid, &mut best)?;
    }
    Ok(HadamardEstimate {
        schema_version: SCHEMA_VERSION,
        c_hat: best.c,
        argmin: best.x,
        search_box: search_box.clone(),
        samples: total + n_random,
        refined: refine,
    })
}

fn refine_argmin(map: &dyn SmoothMap, axes: &[Interval], n_grid: usize, best: &mut Best) -> Result<()> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..REFINE_SWEEPS {
        let start = best.c;
        for (d, iv) in axes.iter().enumerate() {
            let cell = (iv.hi - iv.lo) / (n_grid - 1) as f64;
            let mut x = best.x.clone();
            let mut eval = |s: f64, best: &mut Best| -> Result<f64> {
                x[d] = s;
                let c = c_at(map, &x)?;
                best.offer(c, &x);
                Ok(c)
            };
            let (mut a, mut b) = ((best.x[d] - cell).max(iv.lo), (best.x[d] + cell).min(iv.hi));
            let mut p = b - inv_phi * (b - a);
            let mut q = a + inv_phi * (b - a);
            let mut fp = eval(p, best)?;
            let mut fq = eval(q, best)?;
            for _ in 0..REFINE_ITERATIONS {
                if fp <= fq {
                    b = q;
                    q = p;
                    fq = fp;
                    p = b - inv_phi * (b - a);
                    fp = eval(p, best)?;
                } else {
                    a = p;
                    p = q;
                    fp = fq;
                    q = a + inv_phi * (b - a);
                    fq = eval(q, best)?;
                }
            }
        }
        if !(best.c < start) {
            break;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzViolation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub image_distance: f64,
    pub domain_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzProbe {
    pub schema_version: u32,
    pub c_hat: f64,
    pub pairs: usize,
    /// Smallest observed `|f(x) − f(y)| / |x − y|`.
    pub min_ratio: f64,
    pub violations: Vec<LipschitzViolation>,
}

/// Checks `|f(x) − f(y)| ≥ √c_hat·|x − y|` on `n_pairs` seeded random pairs
/// from the box plus any `extra_pairs`, flagging pairs that fall short by
/// more than a relative 1e-9.
pub fn lipschitz_probe(
    map: &dyn SmoothMap,
    c_hat: f64,
    n_pairs: usize,
    search_box: &SearchBox,
    seed: u64,
    extra_pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<LipschitzProbe> {
    let n = map.dim();
    if !(c_hat >= 0.0 && c_hat.is_finite()) {
        return Err(Error::InvalidInput(format!("c_hat must be finite and non-negative, got {c_hat}")));
    }
    if search_box.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: search_box.dim() });
    }
    for (x, y) in extra_pairs {
        for p in [x, y] {
            check_point(p)?;
            check_dim(p, n)?;
        }
    }
    let root_c = c_hat.sqrt();
    let mut rng = seeded_rng(seed);
    let sampled = (0..n_pairs).map(|_| {
        let x = search_box.sample(&mut rng);
        let y = search_box.sample(&mut rng);
        (x, y)
    });
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = sampled.chain(extra_pairs.iter().cloned()).collect();

    let mut min_ratio = f64::INFINITY;
    let mut violations = Vec::new();
    for (x, y) in &pairs {
        let domain_distance = distance(x, y);
        if domain_distance == 0.0 {
            continue;
        }
        let image_distance = distance(&map.eval(x)?, &map.eval(y)?);
        min_ratio = min_ratio.min(image_distance / domain_distance);
        if image_distance < root_c * domain_distance * (1.0 - 1e-9) {
            violations.push(LipschitzViolation { x: x.clone(), y: y.clone(), image_distance, domain_distance });
        }
    }
    Ok(LipschitzProbe { schema_version: SCHEMA_VERSION, c_hat, pairs: pairs.len(), min_ratio, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::{make_builtin, BuiltinMapId};
    use std::f64::consts::PI;

    fn builtin(name: &str, n: usize) -> crate::BuiltinMap {
        make_builtin(&name.parse::<BuiltinMapId>().unwrap(), n).unwrap()
    }

    #[test]
    fn linear_is_constant() {
        let f = builtin("linear", 2);
        let e = estimate_hadamard(&f, &SearchBox::cube(2, -3.0, 3.0).unwrap(), 5, 10, false, 1).unwrap();
        let s = sigma_min(&f.jacobian(&[0.0, 0.0]).unwrap());
        assert!((e.c_hat - s * s).abs() < 1e-14);
        assert_eq!(e.samples, 35);
        assert_eq!(e.argmin, vec![-3.0, -3.0]);
    }

    #[test]
    fn sinperturb_minimum_near_pi() {
        let f = builtin("sinperturb", 1);
        let e = estimate_hadamard(&f, &SearchBox::cube(1, -10.0, 10.0).unwrap(), 2001, 0, false, 0).unwrap();
        assert!((e.c_hat - 0.25).abs() < 0.0025);
        let x = e.argmin[0];
        let k = ((x - PI) / (2.0 * PI)).round();
        assert!((x - PI - 2.0 * PI * k).abs() < 0.02);
    }

    #[test]
    fn refinement_improves_and_stays_consistent() {
        let f = builtin("sinperturb", 1);
        let b = SearchBox::cube(1, -10.0, 10.0).unwrap();
        let coarse = estimate_hadamard(&f, &b, 7, 0, false, 0).unwrap();
        let fine = estimate_hadamard(&f, &b, 7, 0, true, 0).unwrap();
        assert!(fine.c_hat <= coarse.c_hat);
        assert!((fine.c_hat - 0.25).abs() < 1e-10);
        assert!(b.contains(&fine.argmin));
        assert_eq!(fine.c_hat, c_at(&f, &fine.argmin).unwrap());
    }

    #[test]
    fn expc_decay() {
        let f = builtin("expc", 2);
        for r in [1.0f64, 2.0, 3.0] {
            let b: SearchBox = format!("{}:{},{}:{}", -r, r, -PI, PI).parse().unwrap();
            let e = estimate_hadamard(&f, &b, 21, 0, false, 3).unwrap();
            let want = (-2.0 * r).exp();
            assert!((e.c_hat - want).abs() <= 0.01 * want);
        }
    }

    #[test]
    fn json_fields() {
        let f = builtin("identity", 1);
        let e = estimate_hadamard(&f, &SearchBox::cube(1, 0.0, 1.0).unwrap(), 2, 0, false, 0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["argmin", "box", "c_hat", "refined", "samples", "schema_version"]);
        assert_eq!(v["box"], serde_json::json!([[0.0, 1.0]]));
    }

    #[test]
    fn bad_inputs() {
        let f = builtin("identity", 2);
        assert!(estimate_hadamard(&f, &SearchBox::cube(2, 0.0, 1.0).unwrap(), 1, 0, false, 0).is_err());
        assert!(estimate_hadamard(&f, &SearchBox::cube(3, 0.0, 1.0).unwrap(), 3, 0, false, 0).is_err());
        assert!(lipschitz_probe(&f, -1.0, 3, &SearchBox::cube(2, 0.0, 1.0).unwrap(), 0, &[]).is_err());
    }

    #[test]
    fn identity_probe_is_tight() {
        let f = builtin("identity", 3);
        let p = lipschitz_probe(&f, 1.0, 200, &SearchBox::cube(3, -10.0, 10.0).unwrap(), 9, &[]).unwrap();
        assert!(p.violations.is_empty());
        assert_eq!(p.pairs, 200);
        assert!((p.min_ratio - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn expc_periodic_pair_is_flagged() {
        let f = builtin("expc", 2);
        let pair = (vec![0.0, 0.0], vec![0.0, 2.0 * PI]);
        let p = lipschitz_probe(&f, (-2.0f64).exp(), 0, &SearchBox::cube(2, -1.0, 1.0).unwrap(), 0, &[pair]).unwrap();
        assert_eq!(p.violations.len(), 1);
        let v = &p.violations[0];
        assert!(v.image_distance < 1e-12);
        assert!((v.domain_distance - 2.0 * PI).abs() < 1e-15);
    }
}
