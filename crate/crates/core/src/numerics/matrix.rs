use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        ensure_dim("Matrix::from_vec", rows * cols, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            ensure_dim("Matrix::from_rows", n_cols, row.len())?;
            data.extend_from_slice(row);
        }
        Self::from_vec(n_rows, n_cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        ensure_dim("Matrix::matmul", self.cols, rhs.rows)?;
        let mut out = Self::zeros(self.rows, rhs.cols);
        T::gemm(
            self.rows,
            self.cols,
            rhs.cols,
            T::one(),
            &self.data,
            &rhs.data,
            T::zero(),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self * selfᵀ`.
    pub fn gram(&self) -> Self {
        let mut out = Self::zeros(self.rows, self.rows);
        T::gemm_strided(
            self.rows,
            self.cols,
            self.rows,
            T::one(),
            &self.data,
            (self.cols, 1),
            &self.data,
            (1, self.cols),
            T::zero(),
            &mut out.data,
        );
        out
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        ensure_dim("Matrix::matvec", self.cols, v.len())?;
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Solves `a x = b` by LU decomposition with partial pivoting.
pub fn lu_solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let cols = lu_solve_many(a, &Matrix::from_vec(b.len(), 1, b.to_vec())?)?;
    Ok(cols.into_vec())
}

/// Solves `a X = B` for every column of `B`.
pub fn lu_solve_many<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::dim("lu_solve (square)", a.rows(), a.cols()));
    }
    let n = a.rows();
    ensure_dim("lu_solve (rhs rows)", n, b.rows())?;
    let mut lu = a.clone();
    let mut x = b.clone();
    let m = b.cols();
    for k in 0..n {
        let (pivot, pivot_abs) = (k..n)
            .map(|r| (r, lu[(r, k)].abs()))
            .fold((k, -T::one()), |best, cand| if cand.1 > best.1 { cand } else { best });
        if pivot_abs <= T::epsilon() * T::epsilon() {
            return Err(Error::Numeric("singular linear system".into()));
        }
        if pivot != k {
            for c in 0..n {
                lu.as_mut_slice().swap(k * n + c, pivot * n + c);
            }
            for c in 0..m {
                x.as_mut_slice().swap(k * m + c, pivot * m + c);
            }
        }
        let diag = lu[(k, k)];
        for r in (k + 1)..n {
            let factor = lu[(r, k)] / diag;
            if factor == T::zero() {
                continue;
            }
            lu[(r, k)] = T::zero();
            for c in (k + 1)..n {
                let v = lu[(k, c)];
                lu[(r, c)] -= factor * v;
            }
            for c in 0..m {
                let v = x[(k, c)];
                x[(r, c)] -= factor * v;
            }
        }
    }
    for k in (0..n).rev() {
        let diag = lu[(k, k)];
        for c in 0..m {
            let mut acc = x[(k, c)];
            for j in (k + 1)..n {
                acc -= lu[(k, j)] * x[(j, c)];
            }
            x[(k, c)] = acc / diag;
        }
    }
    Ok(x)
}
