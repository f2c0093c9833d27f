use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major `n x n` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn filled(n: usize, value: T) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.n.max(1))
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.n).map(|r| self[(r, c)]).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.rows().map(|r| r.iter().copied().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.n];
        for row in self.rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s = *s + v;
            }
        }
        sums
    }

    /// Matrix-vector product `self * v`.
    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                found: v.len(),
            });
        }
        Ok(self
            .rows()
            .map(|r| r.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Replaces rows `i` and `j` by `alpha*r_i + beta*r_j` and
    /// `beta*r_i + alpha*r_j`, i.e. left-multiplies by a 2x2 mixing block.
    pub(crate) fn mix_rows(&mut self, i: usize, j: usize, alpha: T, beta: T) {
        let n = self.n;
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (head, tail) = self.data.split_at_mut(hi * n);
        let row_lo = &mut head[lo * n..(lo + 1) * n];
        let row_hi = &mut tail[..n];
        let (ri, rj) = if i < j {
            (row_lo, row_hi)
        } else {
            (row_hi, row_lo)
        };
        for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = alpha * x + beta * y;
            *b = beta * x + alpha * y;
        }
    }

    /// `sum_k (self[i][k] - self[j][k]) * (other[i][k] - other[j][k])`.
    pub(crate) fn row_diff_dot(&self, other: &Self, i: usize, j: usize) -> T {
        let (ui, uj) = (self.row(i), self.row(j));
        let (ri, rj) = (other.row(i), other.row(j));
        let mut acc = T::zero();
        for k in 0..self.n {
            acc = acc + (ui[k] - uj[k]) * (ri[k] - rj[k]);
        }
        acc
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.n + c]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.n + c]
    }
}
