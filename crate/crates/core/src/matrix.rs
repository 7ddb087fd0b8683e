//! Dense `f64` matrix carrier shared by every module.
//!
//! `Matrix` wraps a column-major `nalgebra::DMatrix<f64>` and refuses
//! non-finite entries at construction. Zero-sized dimensions are allowed so
//! that an empty forget set can be represented as a `d x 0` block.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::validation(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    /// Builds a matrix whose columns are the given vectors, all of length `rows`.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::validation(format!(
                "column of length {} in a matrix with {rows} rows",
                bad.len()
            )));
        }
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            data.extend_from_slice(c);
        }
        Self::from_dmatrix(DMatrix::from_vec(rows, columns.len(), data))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::from_dmatrix(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        let m = DMatrix::from_fn(rows, cols, f);
        debug_assert!(m.iter().all(|x| x.is_finite()));
        Matrix(m)
    }

    /// Wraps a nalgebra matrix, rejecting NaN and infinities.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if let Some((idx, v)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite entry {v} at column-major index {idx} of a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Matrix(m))
    }

    pub(crate) fn from_dmatrix_unchecked(m: DMatrix<f64>) -> Self {
        Matrix(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.0[(row, col)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Column-major view of the entries.
    pub fn as_col_major(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn row_major(&self) -> Vec<f64> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols()).map(|j| self.column(j)).collect()
    }

    /// Selects a subset of columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        Matrix(self.0.select_columns(idx.iter()))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix(&self.0 * s)
    }

    /// `self * rhs`; panics on inner-dimension mismatch like nalgebra does.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 * &rhs.0)
    }

    /// `self * rhs^T` without materializing the transpose.
    pub fn matmul_t(&self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 * rhs.0.transpose())
    }

    /// `self^T * rhs`.
    pub fn t_matmul(&self, rhs: &Matrix) -> Matrix {
        Matrix(self.0.tr_mul(&rhs.0))
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(v);
        (&self.0 * v).iter().copied().collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `(self + self^T) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        Matrix((&self.0 + self.0.transpose()) * 0.5)
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Fails with a numerical error if any entry is NaN or infinite.
    pub fn ensure_finite(self, what: &str) -> Result<Matrix> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::numerical(format!(
                "{what} produced non-finite entries ({}x{})",
                self.rows(),
                self.cols()
            )))
        }
    }

    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows() != other.rows() {
            return Err(Error::validation(format!(
                "hstack of {}x{} and {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        let mut out = DMatrix::zeros(self.rows(), self.cols() + other.cols());
        out.columns_mut(0, self.cols()).copy_from(&self.0);
        out.columns_mut(self.cols(), other.cols()).copy_from(&other.0);
        Ok(Matrix(out))
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}{}", self.shape(), self.0)
    }
}

impl<'a> Mul<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &'a Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl<'a> Add<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn add(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 - &rhs.0)
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        Matrix(-&self.0)
    }
}

/// `(A, B)` shared-shape check used by the editors.
pub(crate) fn expect_shape(m: &Matrix, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::validation(format!(
            "{name} must be {rows}x{cols}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Matrix::from_row_slice(1, 2, &[1.0, f64::NAN]).is_err());
        assert!(Matrix::from_row_slice(1, 2, &[1.0, f64::INFINITY]).is_err());
        assert!(Matrix::from_row_slice(1, 3, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn row_major_round_trip() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.row_major(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.as_col_major(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(m.get(1, 2), 6.0);
    }

    #[test]
    fn empty_columns_are_allowed() {
        let m = Matrix::from_columns(4, &[]).unwrap();
        assert_eq!(m.shape(), (4, 0));
        assert_eq!(m.frobenius_sq(), 0.0);
        let prod = Matrix::identity(4).matmul(&m);
        assert_eq!(prod.shape(), (4, 0));
    }
}
