//! Dense complex matrices and LU factorisation with partial pivoting.

use num_complex::Complex64;
use std::ops::{Index, IndexMut};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let orow = other.row(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "vector length must equal column count");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_row_major(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> CMatrix {
        Self::from_row_major(self.rows, self.cols, self.data.iter().map(|a| a * s).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|a| a.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Square submatrix keeping the listed rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm()).fold(0.0, f64::max)
}

/// A pivot fell below the breakdown threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotBreakdown {
    pub step: usize,
    pub pivot: f64,
    pub threshold: f64,
}

/// `PA = LU` packed in one matrix, unit lower triangle implied.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: CMatrix,
    perm: Vec<usize>,
    min_pivot: f64,
}

impl LuFactors {
    /// Factors `a`, failing when a pivot modulus drops below `threshold`.
    pub fn factor(mut a: CMatrix, threshold: f64) -> Result<Self, PivotBreakdown> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        for kcol in 0..n {
            let mut best = kcol;
            let mut best_val = a[(kcol, kcol)].norm();
            for i in (kcol + 1)..n {
                let v = a[(i, kcol)].norm();
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            if !(best_val >= threshold) || best_val == 0.0 {
                return Err(PivotBreakdown {
                    step: kcol,
                    pivot: best_val,
                    threshold,
                });
            }
            min_pivot = min_pivot.min(best_val);
            if best != kcol {
                perm.swap(kcol, best);
                for j in 0..n {
                    a.data.swap(kcol * n + j, best * n + j);
                }
            }
            let pivot = a[(kcol, kcol)];
            let (upper, lower) = a.data.split_at_mut((kcol + 1) * n);
            let prow = &upper[kcol * n..];
            for row in lower.chunks_mut(n) {
                let factor = row[kcol] / pivot;
                row[kcol] = factor;
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in (kcol + 1)..n {
                    row[j] -= factor * prow[j];
                }
            }
        }
        Ok(Self { lu: a, perm, min_pivot })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: Complex64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: Complex64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}
