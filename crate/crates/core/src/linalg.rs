//! Small dense linear algebra: row-major matrices, Cholesky factorization
//! with jitter escalation, and triangular solves.

use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LiloError::input(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LiloError::input(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows_iter().map(<[T]>::to_vec).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.rows > 0 && other.rows > 0 && self.cols != other.cols {
            return Err(LiloError::input("vstack column mismatch"));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { rows: self.rows + other.rows, cols, data })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        self.rows_iter().map(|r| dot(r, v)).collect()
    }

    /// `selfᵀ v`
    pub fn tr_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_matvec shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (r, &vi) in self.rows_iter().zip(v) {
            for (o, &a) in out.iter_mut().zip(r) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn add_diagonal(&mut self, value: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Forces exact symmetry by averaging with the transpose.
    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower Cholesky factor `L` with `A + jitter·I = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Matrix<T>,
    jitter: T,
}

/// Jitter schedule applied on factorization failure: 1e-8 up to 1e-4.
pub const JITTER_SCHEDULE: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

impl<T: Scalar> Cholesky<T> {
    /// Plain factorization; `None` when the matrix is not numerically
    /// positive definite.
    pub fn try_new(a: &Matrix<T>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Self { l, jitter: T::zero() })
    }

    /// Factorizes, escalating diagonal jitter through [`JITTER_SCHEDULE`]
    /// (scaled by the mean diagonal) until the factorization succeeds.
    pub fn with_jitter(a: &Matrix<T>) -> Result<Self> {
        if let Some(c) = Self::try_new(a) {
            return Ok(c);
        }
        let n = a.nrows().max(1);
        let scale = (a.diagonal().into_iter().map(|v| v.abs()).sum::<T>()
            / T::from_usize_lossy(n))
        .max(T::one());
        for &j in &JITTER_SCHEDULE {
            let jitter = T::lit(j) * scale;
            let mut aj = a.clone();
            aj.add_diagonal(jitter);
            if let Some(mut c) = Self::try_new(&aj) {
                c.jitter = jitter;
                return Ok(c);
            }
        }
        Err(LiloError::numerical(format!(
            "Cholesky factorization of a {n}x{n} matrix failed after jitter {:.0e}",
            JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1]
        )))
    }

    pub fn l(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = x[i];
            for k in 0..i {
                s -= row[k] * x[k];
            }
            x[i] = s / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solves `L X = B` column-wise; `B` is n×k.
    pub fn solve_lower_mat(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        let k = b.ncols();
        let mut x = b.clone();
        for i in 0..n {
            let lii = self.l[(i, i)];
            for c in 0..k {
                let mut s = x[(i, c)];
                for p in 0..i {
                    s -= self.l[(i, p)] * x[(p, c)];
                }
                x[(i, c)] = s / lii;
            }
        }
        x
    }

    /// Solves `Lᵀ X = B` column-wise.
    pub fn solve_upper_mat(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        let k = b.ncols();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let lii = self.l[(i, i)];
            for c in 0..k {
                let mut s = x[(i, c)];
                for p in (i + 1)..n {
                    s -= self.l[(p, i)] * x[(p, c)];
                }
                x[(i, c)] = s / lii;
            }
        }
        x
    }

    /// Solves `(L Lᵀ) X = B`.
    pub fn solve_mat(&self, b: &Matrix<T>) -> Matrix<T> {
        self.solve_upper_mat(&self.solve_lower_mat(b))
    }

    /// `(L Lᵀ)⁻¹`
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let linv = self.solve_lower_mat(&Matrix::identity(n));
        // A⁻¹ = L⁻ᵀ L⁻¹
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in i.max(j)..n {
                    s += linv[(k, i)] * linv[(k, j)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        self.l.diagonal().into_iter().map(|d| two * d.ln()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Matrix<f64> {
        let b = Matrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 + if i == j { 1.0 } else { 0.0 });
        let mut a = b.matmul(&b.transpose());
        a.add_diagonal(0.5);
        a
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd(6);
        let c = Cholesky::try_new(&a).unwrap();
        let rec = c.l().matmul(&c.l().transpose());
        for i in 0..6 {
            for j in 0..6 {
                assert!((rec[(i, j)] - a[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solve_and_inverse_agree() {
        let a = spd(5);
        let c = Cholesky::try_new(&a).unwrap();
        let b = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let x = c.solve(&b);
        let ax = a.matvec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
        let inv = c.inverse();
        let id = a.matmul(&inv);
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        // rank-one: all ones
        let a = Matrix::from_fn(4, 4, |_, _| 1.0f64);
        assert!(Cholesky::try_new(&a).is_none());
        let c = Cholesky::with_jitter(&a).unwrap();
        assert!(c.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let mut a = Matrix::identity(3);
        a[(0, 0)] = -5.0f64;
        assert!(Cholesky::with_jitter(&a).is_err());
    }

    #[test]
    fn log_det_matches_product() {
        let a = Matrix::from_rows(&[[4.0f64, 0.0], [0.0, 9.0]]).unwrap();
        let c = Cholesky::try_new(&a).unwrap();
        assert!((c.log_det() - 36f64.ln()).abs() < 1e-12);
    }
}
