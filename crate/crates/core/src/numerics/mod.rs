//! Dense small-dimension linear algebra and an adaptive explicit ODE integrator.

pub mod linalg;
pub mod ode;
pub mod svd;
pub mod vector;

pub use linalg::{solve_linear, Lu, Matrix, Tensor3, RCOND_SINGULAR};
pub use ode::{integrate_adaptive, IntegrationFailure, OdeProblem, Trajectory};
pub use svd::{operator_norm, sigma_min, singular_values};
