//! Graph regularizers on the embedding matrix `H`. Each returns its value
//! and the analytic gradient with respect to `H`.

mod ortho;
mod smooth;

pub use ortho::{
    corr_identity_reg, cross_correlation, cross_correlation_with, neighborhood_summary, neighborhood_summary_backward,
    orthoreg_loss, standardize, CrossCorrelation, Standardized,
};
pub use smooth::{laplacian_reg, p_reg};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphio::{normalize, NormKind, NormalizedOperator, SparseGraph};
use crate::tensor::DenseMatrix;

/// How neighborhood embeddings are pooled into the summary `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Mean of `Ã^t H` for `t = 1..=T`.
    Average,
    /// `Ã²H` only, for heterophilous graphs.
    SecondHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthoRegParams {
    pub alpha: f64,
    pub beta: f64,
    pub t: usize,
    pub pooling: PoolingMode,
    /// Center columns before standardizing.
    pub center: bool,
}

impl Default for OrthoRegParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 1e-6,
            t: 2,
            pooling: PoolingMode::Average,
            center: true,
        }
    }
}

impl OrthoRegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha and beta must be non-negative (alpha = {}, beta = {})",
                self.alpha, self.beta
            )));
        }
        if self.t == 0 {
            return Err(Error::InvalidConfig("T must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which regularizer is added to the supervised loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    None,
    Laplacian { lambda: f64 },
    PReg { lambda: f64 },
    OrthoReg(OrthoRegParams),
    CorrIdentity { lambda: f64, center: bool },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegularizerSpec::None => Ok(()),
            RegularizerSpec::Laplacian { lambda }
            | RegularizerSpec::PReg { lambda }
            | RegularizerSpec::CorrIdentity { lambda, .. } => {
                if *lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "lambda must be non-negative, got {lambda}"
                    )))
                }
            }
            RegularizerSpec::OrthoReg(p) => p.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::None => "none",
            RegularizerSpec::Laplacian { .. } => "laplacian",
            RegularizerSpec::PReg { .. } => "preg",
            RegularizerSpec::OrthoReg(_) => "orthoreg",
            RegularizerSpec::CorrIdentity { .. } => "corr_identity",
        }
    }

    /// Value and gradient at `h`; `None` yields zero.
    pub fn evaluate(&self, h: &DenseMatrix, ops: &GraphOperators) -> Result<(f64, DenseMatrix)> {
        match *self {
            RegularizerSpec::None => Ok((0.0, DenseMatrix::zeros(h.rows(), h.cols()))),
            RegularizerSpec::Laplacian { lambda } => laplacian_reg(h, &ops.laplacian, lambda),
            RegularizerSpec::PReg { lambda } => p_reg(h, &ops.sym, lambda),
            RegularizerSpec::OrthoReg(ref p) => orthoreg_loss(h, &ops.rw, p),
            RegularizerSpec::CorrIdentity { lambda, center } => corr_identity_reg(h, lambda, center),
        }
    }
}

/// The normalized operators a regularizer may need, built once per graph.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    pub sym: NormalizedOperator,
    pub rw: NormalizedOperator,
    pub laplacian: NormalizedOperator,
}

impl GraphOperators {
    pub fn new(g: &SparseGraph) -> Self {
        Self {
            sym: normalize(g, NormKind::Sym),
            rw: normalize(g, NormKind::RandomWalk),
            laplacian: normalize(g, NormKind::Laplacian),
        }
    }
}
