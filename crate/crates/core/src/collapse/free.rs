use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphio::{normalize, NormKind, SparseGraph};
use crate::reg::{
    cross_correlation_with, neighborhood_summary, orthoreg_loss, standardize, OrthoRegParams, PoolingMode,
};
use crate::tensor::{DenseMatrix, CORRELATION_EPS};

#[derive(Debug, Clone)]
pub struct FreeEmbeddingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub steps: usize,
    pub lr: f64,
    pub center: bool,
    pub record_every: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FreeEmbeddingStep {
    pub step: usize,
    pub loss: f64,
    /// `Σ_{k≠k'} C_kk'²` on the auto-correlation of `H`.
    pub off_diag_norm: f64,
    /// Mean diagonal of the cross-correlation of `H` and `S`.
    pub smoothness: f64,
    /// Smallest diagonal entry of the same cross-correlation.
    pub min_diag: f64,
}

#[derive(Debug, Clone)]
pub struct FreeEmbeddingResult {
    pub h: DenseMatrix,
    pub history: Vec<FreeEmbeddingStep>,
}

impl FreeEmbeddingResult {
    pub fn last(&self) -> &FreeEmbeddingStep {
        self.history.last().expect("history always holds the initial state")
    }
}

/// Correlation metrics reported by [`free_embedding_optimize`].
pub fn embedding_metrics(h: &DenseMatrix, s: &DenseMatrix, center: bool) -> Result<(f64, f64, f64)> {
    let st = standardize(h, CORRELATION_EPS, center);
    let mut auto = st.values.t_matmul(&st.values)?;
    auto.scale_in_place(1.0 / h.rows() as f64);
    let d = auto.rows();
    let mut off = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off += auto[(i, j)].powi(2);
            }
        }
    }
    let diag = cross_correlation_with(h, s, CORRELATION_EPS, center)?.c.diagonal();
    let mean = diag.iter().sum::<f64>() / d.max(1) as f64;
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((off, mean, min))
}

/// Plain gradient descent on the OrthoReg objective (`T = 1`, random-walk
/// pooling) with the entries of `H` as the only parameters, from a seeded
/// standard-normal start.
pub fn free_embedding_optimize(
    g: &SparseGraph,
    d: usize,
    cfg: &FreeEmbeddingConfig,
    seed: u64,
) -> Result<FreeEmbeddingResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h0 = DenseMatrix::random_normal(g.n_nodes(), d, &mut rng);
    free_embedding_optimize_from(g, h0, cfg)
}

pub fn free_embedding_optimize_from(
    g: &SparseGraph,
    h0: DenseMatrix,
    cfg: &FreeEmbeddingConfig,
) -> Result<FreeEmbeddingResult> {
    if h0.rows() != g.n_nodes() {
        return Err(Error::shape(format!(
            "H has {} rows, graph has {} nodes",
            h0.rows(),
            g.n_nodes()
        )));
    }
    let rw = normalize(g, NormKind::RandomWalk);
    let params = OrthoRegParams {
        alpha: cfg.alpha,
        beta: cfg.beta,
        t: 1,
        pooling: PoolingMode::Average,
        center: cfg.center,
    };
    let every = cfg.record_every.max(1);
    let mut h = h0;
    let mut history = Vec::new();
    for step in 0..=cfg.steps {
        let (loss, grad) = orthoreg_loss(&h, &rw, &params)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Divergence {
                step,
                what: "orthoreg loss".into(),
            });
        }
        if step % every == 0 || step == cfg.steps {
            let s = neighborhood_summary(&h, &rw, 1, PoolingMode::Average)?;
            let (off_diag_norm, smoothness, min_diag) = embedding_metrics(&h, &s, cfg.center)?;
            history.push(FreeEmbeddingStep {
                step,
                loss,
                off_diag_norm,
                smoothness,
                min_diag,
            });
        }
        if step < cfg.steps {
            h.axpy(-cfg.lr, &grad);
        }
    }
    Ok(FreeEmbeddingResult { h, history })
}
