use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Location of a syntax error in a map file. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular Jacobian at {position:?}{}", fmt_t(*t))]
    SingularJacobian { t: Option<f64>, position: Vec<f64> },

    #[error("path diverged at t = {t} (position {position:?})")]
    PathDiverged { t: f64, position: Vec<f64> },

    #[error("maximum number of steps ({steps}) exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize, position: Vec<f64> },

    #[error("residual {residual:e} did not reach the tolerance after {iters} Newton iterations")]
    ToleranceNotMet { residual: f64, iters: usize, position: Vec<f64> },

    #[error("parse error at {0}")]
    Parse(#[from] ParseError),

    #[error("domain error in {op} at {point:?}")]
    Domain { op: String, point: Vec<f64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn fmt_t(t: Option<f64>) -> String {
    t.map(|t| format!(" (t = {t})")).unwrap_or_default()
}

impl Error {
    /// Stable snake_case name used in JSON reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SingularJacobian { .. } => "singular_jacobian",
            Error::PathDiverged { .. } => "path_diverged",
            Error::MaxStepsExceeded { .. } => "max_steps_exceeded",
            Error::ToleranceNotMet { .. } => "tolerance_not_met",
            Error::Parse(_) => "parse_error",
            Error::Domain { .. } => "domain_error",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io(_) => "io_error",
        }
    }

    /// Parameter value at which the failure happened, when known.
    pub fn t(&self) -> Option<f64> {
        match self {
            Error::SingularJacobian { t, .. } => *t,
            Error::PathDiverged { t, .. } | Error::MaxStepsExceeded { t, .. } => Some(*t),
            _ => None,
        }
    }

    /// Point at which the failure happened, when known.
    pub fn position(&self) -> Option<&[f64]> {
        match self {
            Error::SingularJacobian { position, .. }
            | Error::PathDiverged { position, .. }
            | Error::MaxStepsExceeded { position, .. }
            | Error::ToleranceNotMet { position, .. } => Some(position),
            Error::Domain { point, .. } => Some(point),
            _ => None,
        }
    }

    /// Fills in the point for singularity errors raised by position-agnostic numerics.
    pub(crate) fn at_point(mut self, x: &[f64]) -> Self {
        if let Error::SingularJacobian { position, .. } = &mut self {
            if position.is_empty() {
                *position = x.to_vec();
            }
        }
        self
    }

    /// Keeps only the first `n` coordinates of a reported point, for errors
    /// raised on a phase-space state `(x, v)`.
    pub(crate) fn truncate_position(mut self, n: usize) -> Self {
        match &mut self {
            Error::PathDiverged { position, .. }
            | Error::MaxStepsExceeded { position, .. }
            | Error::SingularJacobian { position, .. } => position.truncate(n),
            Error::Domain { point, .. } => point.truncate(n),
            _ => {}
        }
        self
    }

    /// Attaches the integration parameter to errors raised inside a right-hand side.
    pub(crate) fn at_t(mut self, at: f64) -> Self {
        if let Error::SingularJacobian { t, .. } = &mut self {
            t.get_or_insert(at);
        }
        self
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
