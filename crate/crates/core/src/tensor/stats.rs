//! Covariance, correlation and the normalized eigenvalue sum (NESum) used as
//! the dimensional-collapse metric.

use serde::{Deserialize, Serialize};

use super::{sym_eigvals, DenseMatrix};
use crate::error::Result;

/// Guard added to column variances before taking square roots.
pub const CORRELATION_EPS: f64 = 1e-8;

/// Column-centered matrix and its column means.
pub fn center_columns(h: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let means = h.column_means();
    let mut centered = h.clone();
    for r in 0..h.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    (centered, means)
}

/// Population covariance (divisor N) of the rows of `h`.
pub fn covariance(h: &DenseMatrix) -> DenseMatrix {
    let (centered, _) = center_columns(h);
    let n = h.rows().max(1) as f64;
    let mut cov = centered.t_matmul(&centered).expect("same row count");
    cov.scale_in_place(1.0 / n);
    cov.symmetrized()
}

/// Correlation `Σ_kk' / √((Σ_kk + eps)(Σ_k'k' + eps))`.
pub fn correlation(h: &DenseMatrix, eps: f64) -> DenseMatrix {
    let cov = covariance(h);
    let d = cov.rows();
    let inv: Vec<f64> = (0..d).map(|k| 1.0 / (cov[(k, k)] + eps).sqrt()).collect();
    DenseMatrix::from_fn(d, d, |i, j| cov[(i, j)] * inv[i] * inv[j])
}

/// `Σλ / max(λ_1, eps)` for a non-ascending spectrum.
pub fn nesum(eigenvalues: &[f64]) -> f64 {
    let Some(&top) = eigenvalues.first() else {
        return 0.0;
    };
    eigenvalues.iter().sum::<f64>() / top.max(CORRELATION_EPS)
}

/// Sorted correlation spectrum plus NESum at one point of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub epoch: usize,
    pub eigenvalues: Vec<f64>,
    pub nesum: f64,
}

impl EigenReport {
    pub fn from_eigenvalues(epoch: usize, eigenvalues: Vec<f64>) -> Self {
        let nesum = nesum(&eigenvalues);
        Self {
            epoch,
            eigenvalues,
            nesum,
        }
    }

    /// Spectrum of `correlation(h)`.
    pub fn of_embeddings(epoch: usize, h: &DenseMatrix) -> Result<Self> {
        let c = correlation(h, CORRELATION_EPS);
        Ok(Self::from_eigenvalues(epoch, sym_eigvals(&c)?))
    }

    /// `λ_i / λ_1` for every index (1-based `i` maps to slot `i-1`).
    pub fn normalized(&self) -> Vec<f64> {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0).max(CORRELATION_EPS);
        self.eigenvalues.iter().map(|l| l / top).collect()
    }

    /// `λ_k / λ_1` for a 1-based index `k`.
    pub fn ratio(&self, k: usize) -> f64 {
        self.normalized().get(k - 1).copied().unwrap_or(0.0)
    }
}
