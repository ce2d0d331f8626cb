use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{ensure_dim, Error, Result};
use crate::scalar::{lit, sigmoid, softplus, Scalar};

/// Floor applied to the softplus-transformed diagonal.
pub const CHOLESKY_DIAG_FLOOR: f64 = 1e-6;

/// Lower-triangular factor `A` of a covariance `Σ = A Aᵀ` with positive diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor<T> {
    lower: Matrix<T>,
}

/// Softplus with the diagonal floor, and its derivative (zero on the floor).
#[inline]
pub fn diag_transform<T: Scalar>(raw: T) -> (T, T) {
    let floor: T = lit(CHOLESKY_DIAG_FLOOR);
    let sp = softplus(raw);
    if sp < floor {
        (floor, T::zero())
    } else {
        (sp, sigmoid(raw))
    }
}

/// Builds a factor from a raw lower-triangular matrix: the diagonal goes
/// through the floored softplus, strictly-lower entries are copied.
pub fn cholesky_from_raw<T: Scalar>(raw: &Matrix<T>) -> Result<CholeskyFactor<T>> {
    if !raw.is_square() {
        return Err(Error::dim("cholesky_from_raw (square)", raw.rows(), raw.cols()));
    }
    let n = raw.rows();
    let mut lower = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let v = raw[(r, c)];
            if !v.is_finite() {
                return Err(Error::Numeric("raw Cholesky entries must be finite".into()));
            }
            if c > r {
                if v != T::zero() {
                    return Err(Error::Domain(format!(
                        "raw Cholesky input must be lower-triangular, found {v} at ({r},{c})"
                    )));
                }
            } else if c == r {
                lower[(r, c)] = diag_transform(v).0;
            } else {
                lower[(r, c)] = v;
            }
        }
    }
    Ok(CholeskyFactor { lower })
}

impl<T: Scalar> CholeskyFactor<T> {
    /// Wraps an already-transformed lower-triangular matrix.
    pub fn from_lower(lower: Matrix<T>) -> Result<Self> {
        if !lower.is_square() {
            return Err(Error::dim("CholeskyFactor (square)", lower.rows(), lower.cols()));
        }
        let n = lower.rows();
        for r in 0..n {
            if !(lower[(r, r)] > T::zero()) {
                return Err(Error::Domain("Cholesky diagonal must be positive".into()));
            }
            for c in (r + 1)..n {
                if lower[(r, c)] != T::zero() {
                    return Err(Error::Domain("Cholesky factor must be lower-triangular".into()));
                }
            }
        }
        Ok(CholeskyFactor { lower })
    }

    /// Diagonal matrix with the given standard deviations.
    pub fn diagonal(std: &[T]) -> Result<Self> {
        let n = std.len();
        Self::from_lower(Matrix::from_fn(n, n, |r, c| if r == c { std[r] } else { T::zero() }))
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn covariance(&self) -> Matrix<T> {
        self.lower.gram()
    }

    /// `ln det Σ = 2 Σ ln A_ii`.
    pub fn log_det_covariance(&self) -> T {
        let two: T = lit(2.0);
        (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<T>() * two
    }

    /// `A z`.
    pub fn mul_vec(&self, z: &[T]) -> Result<Vec<T>> {
        ensure_dim("CholeskyFactor::mul_vec", self.dim(), z.len())?;
        let n = self.dim();
        Ok((0..n)
            .map(|r| (0..=r).map(|c| self.lower[(r, c)] * z[c]).sum())
            .collect())
    }

    /// `A⁻¹ b` by forward substitution.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lower[(r, c)] * x[c];
            }
            x[r] = acc / self.lower[(r, r)];
        }
        x
    }

    /// `A⁻ᵀ b` by back substitution.
    pub fn solve_lower_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in (r + 1)..n {
                acc -= self.lower[(c, r)] * x[c];
            }
            x[r] = acc / self.lower[(r, r)];
        }
        x
    }

    /// `A⁻¹ M` column by column.
    pub fn solve_lower_matrix(&self, m: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        let mut out = Matrix::zeros(n, m.cols());
        for c in 0..m.cols() {
            let col: Vec<T> = (0..n).map(|r| m[(r, c)]).collect();
            for (r, v) in self.solve_lower(&col).into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        out
    }

    /// `Σ⁻¹ b`.
    pub fn solve_covariance(&self, b: &[T]) -> Vec<T> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }
}
