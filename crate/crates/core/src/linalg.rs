//! Dense lower-triangular helpers for Gaussian sampling.

use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive semidefinite matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor `a` (row-major `n×n`, only the lower triangle is read).
    ///
    /// Pivots below `rel_tol·max diag` are treated as exact zeros and the
    /// column is dropped; pivots that are clearly negative are an error.
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d < -rel_tol * scale * 10.0 {
                return Err(Error::Cholesky { pivot: j, value: d });
            }
            if d <= rel_tol * scale {
                continue;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `L z`.
    pub fn mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let row = &self.l[i * n..i * n + i + 1];
                row.iter().zip(z).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }
}
