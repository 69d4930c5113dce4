//! Row-major dense square matrices.
//!
//! This is the interchange and verification representation: generators emit
//! it, the reference implementations in [`crate::oracle`] operate on it, and
//! ELLPACK matrices convert to and from it.

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a matrix counts as
/// symmetric: `|a_ij - a_ji| <= tol * max(1, |a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from a row-major slice of length `n * n`.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                op: "from_row_major",
                left: values.len(),
                right: n * n,
            });
        }
        Ok(Self { n, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn fnorm_diff(&self, other: &DenseMatrix) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                op: "fnorm_diff",
                left: self.n,
                right: other.n,
            });
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum();
        Ok(sum.sqrt())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let a = self.get(i, j);
                let b = self.get(j, i);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return false;
                }
            }
        }
        true
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Fraction of entries with `|value| <= threshold`.
    pub fn sparsity(&self, threshold: f64) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        let zeros = self
            .values
            .iter()
            .filter(|v| v.abs() <= threshold)
            .count();
        zeros as f64 / (self.n * self.n) as f64
    }
}
