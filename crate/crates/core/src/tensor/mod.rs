//! Dense and sparse numerical kernels.

mod dense;
mod linalg;
mod sparse;
mod stats;

pub(crate) use dense::standard_normal;
pub use dense::DenseMatrix;
pub use linalg::{
    determinant, expm_sym, singular_values, spectral_apply, sym_eigen, sym_eigvals, SymEigen, JACOBI_MAX_SWEEPS,
    JACOBI_TOL,
};
pub use sparse::CsrMatrix;
pub use stats::{center_columns, correlation, covariance, nesum, EigenReport, CORRELATION_EPS};

use crate::error::Result;
use crate::graphio::NormalizedOperator;

/// `op · m` for a normalized graph operator.
pub fn spmm(op: &NormalizedOperator, m: &DenseMatrix) -> Result<DenseMatrix> {
    op.matrix().spmm(m)
}

/// `opᵀ · m`, used when back-propagating through a propagation step.
pub fn spmm_transposed(op: &NormalizedOperator, m: &DenseMatrix) -> Result<DenseMatrix> {
    op.transposed().spmm(m)
}
