//! Dense linear algebra, the MLP, Adam and Cholesky utilities.

mod adam;
mod cholesky;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use cholesky::{cholesky_from_raw, diag_transform, CholeskyFactor, CHOLESKY_DIAG_FLOOR};
pub use matrix::{lu_solve, lu_solve_many, Matrix};
pub use mlp::{Activation, MlpCache, MlpParams};

use crate::scalar::Scalar;

/// Euclidean norm of a flat parameter vector.
pub fn l2_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}
