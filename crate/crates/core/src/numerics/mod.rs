//! Dense linear algebra, seeded random streams and a finite-difference
//! gradient oracle.

mod finite_diff;
pub(crate) mod matrix;
mod rng;
pub(crate) mod scalar;

pub use finite_diff::{finite_diff_grad, relative_error};
pub use matrix::Matrix;
pub use rng::RngStream;
pub use scalar::Scalar;
