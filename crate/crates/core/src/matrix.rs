//! Dense row-major complex matrices.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} entries supplied for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(z) = data.iter().find(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invariant(format!("non-finite entry {z}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(r, c, rows.iter().flat_map(|row| row.iter().map(|&x| C64::new(x, 0.0))).collect())
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension("shape mismatch in subtraction".into()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `A Aᵀ` (plain transpose). Only the upper triangle is accumulated and
    /// mirrored, so the result is exactly symmetric.
    pub fn times_own_transpose(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: C64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// `A† A`, which is Hermitian positive semidefinite.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: C64 = (0..self.rows).map(|k| self[(k, i)].conj() * self[(k, j)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s.conj();
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-norm distance `max |A_ij - B_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `max |A_ij - A_ji|`; infinite for non-square input.
    pub fn symmetry_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut r: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                r = r.max((self[(i, j)] - self[(j, i)]).norm());
            }
        }
        r
    }

    /// Replaces each mirrored pair by its average; the result is bit-exactly
    /// symmetric.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let avg = (self[(i, j)] + self[(j, i)]) * 0.5;
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        out
    }

    /// `‖A†A − I‖_max`.
    pub fn unitarity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let g = self.gram();
        let id = Self::identity(self.rows);
        g.max_abs_diff(&id).unwrap_or(f64::INFINITY)
    }

    /// Block-diagonal direct sum `A ⊕ B`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows + other.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                out[(self.rows + i, self.cols + j)] = other[(i, j)];
            }
        }
        out
    }

    /// Rows and columns restricted to the given index lists, keeping their order.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Result<Self> {
        check_indices(row_idx, self.rows)?;
        check_indices(col_idx, self.cols)?;
        Ok(Self::from_fn(row_idx.len(), col_idx.len(), |i, j| self[(row_idx[i], col_idx[j])]))
    }

    /// Like [`Self::submatrix`] but indices may repeat.
    pub fn submatrix_with_repeats(&self, row_idx: &[usize], col_idx: &[usize]) -> Result<Self> {
        let bad_row = row_idx.iter().find(|&&i| i >= self.rows).map(|&i| (i, self.rows));
        let bad_col = col_idx.iter().find(|&&j| j >= self.cols).map(|&j| (j, self.cols));
        if let Some((index, dim)) = bad_row.or(bad_col) {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        Ok(Self::from_fn(row_idx.len(), col_idx.len(), |i, j| self[(row_idx[i], col_idx[j])]))
    }

    /// Simultaneous row and column permutation `P A Pᵀ` with `(PAPᵀ)_ij = A_{p(i) p(j)}`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.rows || !self.is_square() {
            return Err(Error::Dimension("permutation length must match square matrix".into()));
        }
        self.submatrix(perm, perm)
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

fn check_indices(idx: &[usize], dim: usize) -> Result<()> {
    let mut seen = vec![false; dim];
    for &i in idx {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        if seen[i] {
            return Err(Error::DuplicateIndex(i));
        }
        seen[i] = true;
    }
    Ok(())
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        assert!(ComplexMatrix::new(2, 2, vec![c(0.0, 0.0); 3]).is_err());
        assert!(ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]).is_err());
        assert!(ComplexMatrix::new(1, 1, vec![c(0.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn submatrix_identity_cases() {
        let id = ComplexMatrix::identity(3);
        assert_eq!(id.submatrix(&[0], &[0]).unwrap().as_slice(), &[c(1.0, 0.0)]);
        let a = ComplexMatrix::from_fn(3, 4, |i, j| c(i as f64, j as f64));
        assert_eq!(a.submatrix(&[0, 1, 2], &[0, 1, 2, 3]).unwrap(), a);
        let s = a.submatrix(&[2, 0], &[3, 1]).unwrap();
        assert_eq!(s[(0, 0)], c(2.0, 3.0));
        assert_eq!(s[(1, 1)], c(0.0, 1.0));
    }

    #[test]
    fn submatrix_rejects_bad_indices() {
        let a = ComplexMatrix::identity(3);
        assert!(matches!(a.submatrix(&[3], &[0]), Err(Error::IndexOutOfRange { index: 3, dim: 3 })));
        assert!(matches!(a.submatrix(&[0, 0], &[0]), Err(Error::DuplicateIndex(0))));
    }

    #[test]
    fn transpose_product_is_exactly_symmetric() {
        let a = ComplexMatrix::from_fn(3, 5, |i, j| c((i * 7 + j) as f64 * 0.31, (i + 3 * j) as f64 * -0.17));
        let s = a.times_own_transpose();
        assert_eq!(s.symmetry_residual(), 0.0);
        let direct = a.matmul(&a.transpose()).unwrap();
        assert!(s.max_abs_diff(&direct).unwrap() < 1e-12);
    }

    #[test]
    fn gram_matches_adjoint_product() {
        let a = ComplexMatrix::from_fn(4, 2, |i, j| c(i as f64 - j as f64, 0.5 * (i * j) as f64));
        let g = a.gram();
        let direct = a.adjoint().matmul(&a).unwrap();
        assert!(g.max_abs_diff(&direct).unwrap() < 1e-12);
        assert!((g.trace().re - a.frobenius_sq()).abs() < 1e-12);
    }

    #[test]
    fn direct_sum_layout() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = ComplexMatrix::from_real_rows(&[&[5.0]]).unwrap();
        let s = a.direct_sum(&b);
        assert_eq!(s.rows(), 3);
        assert_eq!(s[(1, 0)], c(3.0, 0.0));
        assert_eq!(s[(2, 2)], c(5.0, 0.0));
        assert_eq!(s[(0, 2)], c(0.0, 0.0));
    }
}
