use rand::Rng;

use super::{DynamicsRun, Snapshot, TrajectoryKind};
use crate::error::{Error, Result};
use crate::graphio::{NormKind, NormalizedOperator};
use crate::tensor::{
    covariance, singular_values, spectral_apply, spmm, standard_normal, sym_eigen, sym_eigvals, DenseMatrix,
    EigenReport,
};

/// `P = XᵀLX`, symmetrized.
pub fn build_p(x: &DenseMatrix, lap: &NormalizedOperator) -> Result<DenseMatrix> {
    if x.rows() != lap.n_nodes() {
        return Err(Error::shape(format!(
            "X has {} rows, operator has {} nodes",
            x.rows(),
            lap.n_nodes()
        )));
    }
    let lx = spmm(lap, x)?;
    Ok(x.t_matmul(&lx)?.symmetrized())
}

/// Snapshot of a weight matrix: its singular values, plus the spectrum of
/// `WᵀW` (the squared singular values padded with zeros) as eigen report.
fn weight_snapshot(step: usize, time: f64, w: DenseMatrix) -> Result<Snapshot> {
    let sv = singular_values(&w)?;
    let mut eig: Vec<f64> = sv.iter().map(|s| s * s).collect();
    eig.resize(w.cols(), 0.0);
    Ok(Snapshot {
        step,
        time,
        singular_values: sv,
        eigen: EigenReport::from_eigenvalues(step, eig),
        state: w,
    })
}

/// `W(t) = exp(sign·P·t)·W0` at each requested time.
pub fn closed_form_trajectory(p: &DenseMatrix, w0: &DenseMatrix, times: &[f64], sign: f64) -> Result<DynamicsRun> {
    if p.rows() != w0.rows() {
        return Err(Error::shape(format!(
            "P is {}x{}, W0 has {} rows",
            p.rows(),
            p.cols(),
            w0.rows()
        )));
    }
    if times.first().is_some_and(|&t| t != 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("times must start at 0 and increase".into()));
    }
    let eig = sym_eigen(p)?;
    let mut snapshots = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let w = spectral_apply(&eig, |l| (sign * l * t).exp()).matmul(w0)?;
        snapshots.push(weight_snapshot(k, t, w)?);
    }
    Ok(DynamicsRun {
        kind: TrajectoryKind::ClosedFormExpm,
        snapshots,
    })
}

/// Gradient descent `W ← W − η·2PW` on `tr(WᵀPW)` with `P = XᵀLX`.
pub fn gd_linear_trajectory(
    x: &DenseMatrix,
    lap: &NormalizedOperator,
    w0: &DenseMatrix,
    step_size: f64,
    steps: usize,
    snapshot_every: usize,
) -> Result<DynamicsRun> {
    gd_trajectory_from_p(&build_p(x, lap)?, w0, step_size, steps, snapshot_every)
}

/// As [`gd_linear_trajectory`] for a given `P`. Snapshots are taken at step
/// 0, every `snapshot_every` steps, and at the final step; `time` records
/// `step·η`.
pub fn gd_trajectory_from_p(
    p: &DenseMatrix,
    w0: &DenseMatrix,
    step_size: f64,
    steps: usize,
    snapshot_every: usize,
) -> Result<DynamicsRun> {
    if p.rows() != w0.rows() {
        return Err(Error::shape(format!(
            "P is {}x{}, W0 has {} rows",
            p.rows(),
            p.cols(),
            w0.rows()
        )));
    }
    let lambda_max = sym_eigvals(p)?.first().copied().unwrap_or(0.0);
    let product = step_size * lambda_max;
    if product >= 0.5 {
        return Err(Error::UnstableStepSize(product));
    }
    let every = snapshot_every.max(1);
    let mut w = w0.clone();
    let mut snapshots = vec![weight_snapshot(0, 0.0, w.clone())?];
    for step in 1..=steps {
        let pw = p.matmul(&w)?;
        w.axpy(-2.0 * step_size, &pw);
        if !w.is_finite() {
            return Err(Error::Divergence {
                step,
                what: "weight matrix".into(),
            });
        }
        if step % every == 0 || step == steps {
            snapshots.push(weight_snapshot(step, step as f64 * step_size, w.clone())?);
        }
    }
    Ok(DynamicsRun {
        kind: TrajectoryKind::GradientDescentLinear,
        snapshots,
    })
}

fn feature_snapshot(step: usize, h: DenseMatrix) -> Result<Snapshot> {
    Ok(Snapshot {
        step,
        time: step as f64,
        singular_values: singular_values(&h)?,
        eigen: EigenReport::of_embeddings(step, &h)?,
        state: h,
    })
}

/// `H ← (1−2τ)H + 2τ·ÃH` with `Ã` the symmetric normalized adjacency.
pub fn feature_space_trajectory(
    h0: &DenseMatrix,
    a_sym: &NormalizedOperator,
    tau: f64,
    steps: usize,
    snapshot_every: usize,
) -> Result<DynamicsRun> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("tau must lie in [0, 1], got {tau}")));
    }
    if a_sym.kind() != NormKind::Sym {
        return Err(Error::InvalidConfig(
            "feature update needs the symmetric normalized adjacency".into(),
        ));
    }
    if h0.rows() != a_sym.n_nodes() {
        return Err(Error::shape(format!(
            "H has {} rows, graph has {} nodes",
            h0.rows(),
            a_sym.n_nodes()
        )));
    }
    let every = snapshot_every.max(1);
    let mut h = h0.clone();
    let mut snapshots = vec![feature_snapshot(0, h.clone())?];
    for step in 1..=steps {
        let ah = spmm(a_sym, &h)?;
        h.scale_in_place(1.0 - 2.0 * tau);
        h.axpy(2.0 * tau, &ah);
        if step % every == 0 || step == steps {
            snapshots.push(feature_snapshot(step, h.clone())?);
        }
    }
    Ok(DynamicsRun {
        kind: TrajectoryKind::FeatureSpaceUpdate,
        snapshots,
    })
}

/// ZCA whitening: centered `X·Σ^{-1/2}` so the covariance is the identity.
pub fn whiten(x: &DenseMatrix) -> Result<DenseMatrix> {
    let (centered, _) = crate::tensor::center_columns(x);
    let eig = sym_eigen(&covariance(x))?;
    let floor = 1e-12 * eig.values.first().copied().unwrap_or(0.0).max(1e-300);
    if eig.values.iter().any(|&l| l <= floor) {
        return Err(Error::InvalidConfig(
            "features are rank deficient and cannot be whitened".into(),
        ));
    }
    centered.matmul(&spectral_apply(&eig, |l| 1.0 / l.sqrt()))
}

/// Largest deviation of `covariance(x)` from the identity.
pub fn whitening_error(x: &DenseMatrix) -> f64 {
    covariance(x).max_abs_diff(&DenseMatrix::identity(x.cols()))
}

/// Haar-distributed orthogonal matrix via Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    DenseMatrix::from_fn(n, n, |r, c| cols[c][r])
}
