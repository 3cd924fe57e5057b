use crate::error::{Error, Result};
use crate::graphio::{NormKind, NormalizedOperator};
use crate::tensor::{spmm, spmm_transposed, DenseMatrix};

pub(super) fn expect_kind(op: &NormalizedOperator, kind: NormKind) -> Result<()> {
    if op.kind() != kind {
        return Err(Error::InvalidConfig(format!(
            "expected a {kind:?} operator, got {:?}",
            op.kind()
        )));
    }
    Ok(())
}

pub(super) fn expect_rows(h: &DenseMatrix, op: &NormalizedOperator) -> Result<()> {
    if h.rows() != op.n_nodes() {
        return Err(Error::shape(format!(
            "H has {} rows, graph has {} nodes",
            h.rows(),
            op.n_nodes()
        )));
    }
    Ok(())
}

/// `λ·tr(HᵀLH)` and its gradient `2λ·LH`.
pub fn laplacian_reg(h: &DenseMatrix, lap: &NormalizedOperator, lambda: f64) -> Result<(f64, DenseMatrix)> {
    expect_kind(lap, NormKind::Laplacian)?;
    expect_rows(h, lap)?;
    let lh = spmm(lap, h)?;
    let value = lambda * h.dot(&lh)?;
    Ok((value, lh.scale(2.0 * lambda)))
}

/// `λ/N·‖ÃH − H‖²` and its gradient `2λ/N·(Ã − I)ᵀ(ÃH − H)`.
pub fn p_reg(h: &DenseMatrix, a_sym: &NormalizedOperator, lambda: f64) -> Result<(f64, DenseMatrix)> {
    expect_kind(a_sym, NormKind::Sym)?;
    expect_rows(h, a_sym)?;
    let n = h.rows().max(1) as f64;
    let resid = spmm(a_sym, h)?.sub(h)?;
    let value = lambda / n * resid.dot(&resid)?;
    let mut grad = spmm_transposed(a_sym, &resid)?;
    grad.axpy(-1.0, &resid);
    grad.scale_in_place(2.0 * lambda / n);
    Ok((value, grad))
}
