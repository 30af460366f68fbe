use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Lu, Matrix, Tensor3};

use super::SmoothMap;

pub const DEFAULT_SINPERTURB_ALPHA: f64 = 0.5;
pub const DEFAULT_CYCLOSIN_ALPHA: f64 = 0.4;

/// Names of the builtin test maps.
#[derive(Clone, Debug, PartialEq)]
pub enum BuiltinMapId {
    /// `f(x) = x`.
    Identity,
    /// `f(x) = A x + b`. Without explicit parameters `A` is upper bidiagonal
    /// with diagonal `2, 1, 2, 1, …` and unit superdiagonal (so `[[2,1],[0,1]]`
    /// for `n = 2`) and `b = 0`.
    Linear { matrix: Option<Matrix>, offset: Option<Vec<f64>> },
    /// `f_i(x) = x_i + α sin(x_i)`, `|α| < 1`.
    SinPerturb(f64),
    /// `f_i(x) = x_i + α sin(x_{i+1 mod n})`, `|α| < 1`.
    CycloSin(f64),
    /// `f(x₁, x₂) = (x₁, x₂ + x₁²)`.
    Shear2,
    /// `f(x₁, x₂) = (e^{x₁} cos x₂, e^{x₁} sin x₂)`, the complex exponential.
    Expc,
}

impl BuiltinMapId {
    pub fn linear_default() -> Self {
        BuiltinMapId::Linear { matrix: None, offset: None }
    }

    /// Whether the map satisfies the uniform bound on `‖Df⁻¹‖` over all of `ℝⁿ`.
    pub fn satisfies_hadamard(&self) -> bool {
        !matches!(self, BuiltinMapId::Shear2 | BuiltinMapId::Expc)
    }

    /// Dimension forced by the map, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            BuiltinMapId::Shear2 | BuiltinMapId::Expc => Some(2),
            BuiltinMapId::Linear { matrix: Some(a), .. } => Some(a.dim()),
            _ => None,
        }
    }
}

impl fmt::Display for BuiltinMapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinMapId::Identity => f.write_str("identity"),
            BuiltinMapId::Linear { .. } => f.write_str("linear"),
            BuiltinMapId::SinPerturb(a) => write!(f, "sinperturb:{a}"),
            BuiltinMapId::CycloSin(a) => write!(f, "cyclosin:{a}"),
            BuiltinMapId::Shear2 => f.write_str("shear2"),
            BuiltinMapId::Expc => f.write_str("expc"),
        }
    }
}

impl FromStr for BuiltinMapId {
    type Err = Error;

    /// Parses `identity`, `linear`, `sinperturb[:α]`, `cyclosin[:α]`,
    /// `shear2` and `expc`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((name, p)) => (name, Some(p)),
            None => (s, None),
        };
        let alpha = |default: f64| -> Result<f64> {
            match param {
                None => Ok(default),
                Some(p) => p
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad parameter in map name `{s}`"))),
            }
        };
        let no_param = |id: BuiltinMapId| -> Result<BuiltinMapId> {
            match param {
                None => Ok(id),
                Some(_) => Err(Error::InvalidInput(format!("map `{name}` takes no parameter"))),
            }
        };
        match name.trim() {
            "identity" => no_param(BuiltinMapId::Identity),
            "linear" => no_param(BuiltinMapId::linear_default()),
            "sinperturb" => Ok(BuiltinMapId::SinPerturb(alpha(DEFAULT_SINPERTURB_ALPHA)?)),
            "cyclosin" => Ok(BuiltinMapId::CycloSin(alpha(DEFAULT_CYCLOSIN_ALPHA)?)),
            "shear2" => no_param(BuiltinMapId::Shear2),
            "expc" => no_param(BuiltinMapId::Expc),
            _ => Err(Error::InvalidInput(format!("unknown builtin map `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Identity,
    Linear { matrix: Matrix, offset: Vec<f64> },
    SinPerturb(f64),
    CycloSin(f64),
    Shear2,
    Expc,
}

/// A builtin map with closed-form derivatives.
#[derive(Clone, Debug)]
pub struct BuiltinMap {
    id: BuiltinMapId,
    n: usize,
    kind: Kind,
}

impl BuiltinMap {
    pub fn id(&self) -> &BuiltinMapId {
        &self.id
    }
}

fn default_linear_matrix(n: usize) -> Matrix {
    let mut a = Matrix::zeros(n);
    for i in 0..n {
        a[(i, i)] = if i % 2 == 0 { 2.0 } else { 1.0 };
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
    }
    a
}

/// Instantiates a builtin map in dimension `n`.
pub fn make_builtin(id: &BuiltinMapId, n: usize) -> Result<BuiltinMap> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if let Some(fixed) = id.fixed_dim() {
        if fixed != n {
            return Err(Error::DimensionMismatch { expected: fixed, found: n });
        }
    }
    let check_alpha = |a: f64| -> Result<f64> {
        if a.is_finite() && a.abs() < 1.0 {
            Ok(a)
        } else {
            Err(Error::InvalidInput(format!("parameter must satisfy |α| < 1, got {a}")))
        }
    };
    let kind = match id {
        BuiltinMapId::Identity => Kind::Identity,
        BuiltinMapId::Linear { matrix, offset } => {
            let matrix = matrix.clone().unwrap_or_else(|| default_linear_matrix(n));
            let offset = offset.clone().unwrap_or_else(|| vec![0.0; n]);
            if offset.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: offset.len() });
            }
            if Lu::factor(&matrix).is_err() {
                return Err(Error::InvalidInput("linear map matrix must be invertible".into()));
            }
            Kind::Linear { matrix, offset }
        }
        BuiltinMapId::SinPerturb(a) => Kind::SinPerturb(check_alpha(*a)?),
        BuiltinMapId::CycloSin(a) => Kind::CycloSin(check_alpha(*a)?),
        BuiltinMapId::Shear2 => Kind::Shear2,
        BuiltinMapId::Expc => Kind::Expc,
    };
    Ok(BuiltinMap { id: id.clone(), n, kind })
}

impl SmoothMap for BuiltinMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        self.id.to_string()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        Ok(match &self.kind {
            Kind::Identity => x.to_vec(),
            Kind::Linear { matrix, offset } => {
                matrix.mul_vec(x).iter().zip(offset).map(|(a, b)| a + b).collect()
            }
            Kind::SinPerturb(a) => x.iter().map(|&v| v + a * v.sin()).collect(),
            Kind::CycloSin(a) => (0..n).map(|i| x[i] + a * x[(i + 1) % n].sin()).collect(),
            Kind::Shear2 => vec![x[0], x[1] + x[0] * x[0]],
            Kind::Expc => {
                let r = x[0].exp();
                vec![r * x[1].cos(), r * x[1].sin()]
            }
        })
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.n;
        Ok(match &self.kind {
            Kind::Identity => Matrix::identity(n),
            Kind::Linear { matrix, .. } => matrix.clone(),
            Kind::SinPerturb(a) => {
                Matrix::diagonal(&x.iter().map(|v| 1.0 + a * v.cos()).collect::<Vec<_>>())
            }
            Kind::CycloSin(a) => {
                let mut j = Matrix::identity(n);
                for i in 0..n {
                    let k = (i + 1) % n;
                    j[(i, k)] += a * x[k].cos();
                }
                j
            }
            Kind::Shear2 => Matrix::from_raw(2, vec![1.0, 0.0, 2.0 * x[0], 1.0]),
            Kind::Expc => {
                let r = x[0].exp();
                let (s, c) = x[1].sin_cos();
                Matrix::from_raw(2, vec![r * c, -r * s, r * s, r * c])
            }
        })
    }

    fn second_derivative(&self, x: &[f64]) -> Result<Tensor3> {
        let n = self.n;
        let mut h = Tensor3::zeros(n);
        match &self.kind {
            Kind::Identity | Kind::Linear { .. } => {}
            Kind::SinPerturb(a) => {
                for i in 0..n {
                    h[(i, i, i)] = -a * x[i].sin();
                }
            }
            Kind::CycloSin(a) => {
                for i in 0..n {
                    let k = (i + 1) % n;
                    h[(i, k, k)] = -a * x[k].sin();
                }
            }
            Kind::Shear2 => h[(1, 0, 0)] = 2.0,
            Kind::Expc => {
                let r = x[0].exp();
                let (s, c) = x[1].sin_cos();
                // f1 = r cos x2
                h[(0, 0, 0)] = r * c;
                h[(0, 0, 1)] = -r * s;
                h[(0, 1, 0)] = -r * s;
                h[(0, 1, 1)] = -r * c;
                // f2 = r sin x2
                h[(1, 0, 0)] = r * s;
                h[(1, 0, 1)] = r * c;
                h[(1, 1, 0)] = r * c;
                h[(1, 1, 1)] = -r * s;
            }
        }
        Ok(h)
    }
}
