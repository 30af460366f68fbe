// Negated comparisons are how NaN inputs are rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr_map;
pub mod inverse_solver;
pub mod map_model;
pub mod numerics;
pub mod pullback_geometry;
pub mod sampling;
pub mod selftest;

pub use error::{Error, ParseError, Result};
pub use map_model::{make_builtin, BuiltinMap, BuiltinMapId, SmoothMap};
pub use numerics::{Matrix, Tensor3};
