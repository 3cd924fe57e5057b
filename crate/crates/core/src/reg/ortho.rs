use super::smooth::{expect_kind, expect_rows};
use super::{OrthoRegParams, PoolingMode};
use crate::error::{Error, Result};
use crate::graphio::{NormKind, NormalizedOperator};
use crate::tensor::{spmm, spmm_transposed, DenseMatrix, CORRELATION_EPS};

/// Neighborhood summary `S`: `(Σ_{t=1..T} Ã^t H)/T`, or `Ã²H` in
/// second-hop mode.
pub fn neighborhood_summary(
    h: &DenseMatrix,
    a_rw: &NormalizedOperator,
    t: usize,
    mode: PoolingMode,
) -> Result<DenseMatrix> {
    expect_kind(a_rw, NormKind::RandomWalk)?;
    expect_rows(h, a_rw)?;
    match mode {
        PoolingMode::SecondHop => spmm(a_rw, &spmm(a_rw, h)?),
        PoolingMode::Average => {
            if t == 0 {
                return Err(Error::InvalidConfig("T must be at least 1".into()));
            }
            let mut power = spmm(a_rw, h)?;
            let mut sum = power.clone();
            for _ in 1..t {
                power = spmm(a_rw, &power)?;
                sum.add_assign(&power);
            }
            sum.scale_in_place(1.0 / t as f64);
            Ok(sum)
        }
    }
}

/// Adjoint of [`neighborhood_summary`]: maps `∂L/∂S` to `∂L/∂H`.
pub fn neighborhood_summary_backward(
    grad_s: &DenseMatrix,
    a_rw: &NormalizedOperator,
    t: usize,
    mode: PoolingMode,
) -> Result<DenseMatrix> {
    match mode {
        PoolingMode::SecondHop => spmm_transposed(a_rw, &spmm_transposed(a_rw, grad_s)?),
        PoolingMode::Average => {
            // Horner form of (1/T) Σ_t (Ãᵀ)^t G.
            let mut acc = grad_s.clone();
            for _ in 1..t {
                let mut next = spmm_transposed(a_rw, &acc)?;
                next.add_assign(grad_s);
                acc = next;
            }
            let mut out = spmm_transposed(a_rw, &acc)?;
            out.scale_in_place(1.0 / t.max(1) as f64);
            Ok(out)
        }
    }
}

/// Column standardization with the statistics needed to back-propagate.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub values: DenseMatrix,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub centered: bool,
}

/// `(x - mean)/√(var + eps)` per column, or `x/√(mean(x²) + eps)` when
/// `center` is false.
pub fn standardize(x: &DenseMatrix, eps: f64, center: bool) -> Standardized {
    let n = x.rows().max(1) as f64;
    let means = if center { x.column_means() } else { vec![0.0; x.cols()] };
    let mut second = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for ((s, v), m) in second.iter_mut().zip(x.row(r)).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let stds: Vec<f64> = second.iter().map(|s| (s / n + eps).sqrt()).collect();
    let mut values = x.clone();
    for r in 0..x.rows() {
        for ((v, m), s) in values.row_mut(r).iter_mut().zip(&means).zip(&stds) {
            *v = (*v - m) / s;
        }
    }
    Standardized {
        values,
        means,
        stds,
        centered: center,
    }
}

impl Standardized {
    /// Maps `∂L/∂x̄` to `∂L/∂x`:
    /// `(g − mean(g) − x̄·mean(g ⊙ x̄))/σ`, the `mean(g)` term only when centered.
    pub fn backward(&self, g: &DenseMatrix) -> DenseMatrix {
        let (rows, cols) = self.values.shape();
        let n = rows.max(1) as f64;
        let mut mean_g = vec![0.0; cols];
        let mut mean_gx = vec![0.0; cols];
        for r in 0..rows {
            for (k, (gv, xv)) in g.row(r).iter().zip(self.values.row(r)).enumerate() {
                mean_g[k] += gv;
                mean_gx[k] += gv * xv;
            }
        }
        mean_g.iter_mut().for_each(|v| *v /= n);
        mean_gx.iter_mut().for_each(|v| *v /= n);
        if !self.centered {
            mean_g.iter_mut().for_each(|v| *v = 0.0);
        }
        DenseMatrix::from_fn(rows, cols, |r, k| {
            (g[(r, k)] - mean_g[k] - self.values[(r, k)] * mean_gx[k]) / self.stds[k]
        })
    }
}

/// `C = H̄ᵀS̄/N` together with both standardizations.
#[derive(Debug, Clone)]
pub struct CrossCorrelation {
    pub c: DenseMatrix,
    pub h: Standardized,
    pub s: Standardized,
}

impl CrossCorrelation {
    pub fn column_means_h(&self) -> &[f64] {
        &self.h.means
    }

    pub fn column_means_s(&self) -> &[f64] {
        &self.s.means
    }

    pub fn column_stds_h(&self) -> &[f64] {
        &self.h.stds
    }

    pub fn column_stds_s(&self) -> &[f64] {
        &self.s.stds
    }
}

fn check_pair(h: &DenseMatrix, s: &DenseMatrix) -> Result<()> {
    if h.shape() != s.shape() {
        return Err(Error::shape(format!(
            "cross-correlation of {}x{} and {}x{}",
            h.rows(),
            h.cols(),
            s.rows(),
            s.cols()
        )));
    }
    if h.rows() < 2 {
        return Err(Error::shape("cross-correlation needs at least two rows"));
    }
    Ok(())
}

/// Centered cross-correlation of the columns of `h` and `s`.
pub fn cross_correlation(h: &DenseMatrix, s: &DenseMatrix, eps: f64) -> Result<CrossCorrelation> {
    cross_correlation_with(h, s, eps, true)
}

pub fn cross_correlation_with(h: &DenseMatrix, s: &DenseMatrix, eps: f64, center: bool) -> Result<CrossCorrelation> {
    check_pair(h, s)?;
    let hs = standardize(h, eps, center);
    let ss = standardize(s, eps, center);
    let mut c = hs.values.t_matmul(&ss.values)?;
    c.scale_in_place(1.0 / h.rows() as f64);
    Ok(CrossCorrelation { c, h: hs, s: ss })
}

/// `−α·Σ C_kk + β·Σ_{k≠k'} C_kk'²` and `∂/∂C`.
fn ortho_objective(c: &DenseMatrix, alpha: f64, beta: f64) -> (f64, DenseMatrix) {
    let d = c.rows();
    let mut value = 0.0;
    let mut g = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let v = c[(i, j)];
            if i == j {
                value -= alpha * v;
                g[(i, j)] = -alpha;
            } else {
                value += beta * v * v;
                g[(i, j)] = 2.0 * beta * v;
            }
        }
    }
    (value, g)
}

/// OrthoReg value and gradient with respect to `H`, chaining through both
/// standardizations and through `S`'s dependence on `H`.
pub fn orthoreg_loss(h: &DenseMatrix, a_rw: &NormalizedOperator, p: &OrthoRegParams) -> Result<(f64, DenseMatrix)> {
    p.validate()?;
    let s = neighborhood_summary(h, a_rw, p.t, p.pooling)?;
    let cc = cross_correlation_with(h, &s, CORRELATION_EPS, p.center)?;
    let (value, g) = ortho_objective(&cc.c, p.alpha, p.beta);
    let n = h.rows() as f64;
    let mut g_hbar = cc.s.values.matmul_t(&g)?;
    g_hbar.scale_in_place(1.0 / n);
    let mut g_sbar = cc.h.values.matmul(&g)?;
    g_sbar.scale_in_place(1.0 / n);
    let mut grad = cc.h.backward(&g_hbar);
    let through_s = neighborhood_summary_backward(&cc.s.backward(&g_sbar), a_rw, p.t, p.pooling)?;
    grad.add_assign(&through_s);
    Ok((value, grad))
}

/// `λ·Σ_{k≠k'} C_kk'²` on the auto-correlation of `H`, with gradient.
pub fn corr_identity_reg(h: &DenseMatrix, lambda: f64, center: bool) -> Result<(f64, DenseMatrix)> {
    if h.rows() < 2 {
        return Err(Error::shape("correlation needs at least two rows"));
    }
    let st = standardize(h, CORRELATION_EPS, center);
    let n = h.rows() as f64;
    let mut c = st.values.t_matmul(&st.values)?;
    c.scale_in_place(1.0 / n);
    let (value, g) = ortho_objective(&c, 0.0, lambda);
    // H̄ enters C twice and G is symmetric.
    let mut g_bar = st.values.matmul(&g)?;
    g_bar.scale_in_place(2.0 / n);
    Ok((value, st.backward(&g_bar)))
}
