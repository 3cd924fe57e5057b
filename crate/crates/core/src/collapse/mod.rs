//! Numerical laboratory for dimensional collapse: closed-form and iterative
//! dynamics under Laplacian smoothing, spectrum trajectories, and numerical
//! checks of the collapse and orthogonality results.

mod dynamics;
mod free;

pub use dynamics::{
    build_p, closed_form_trajectory, feature_space_trajectory, gd_linear_trajectory, gd_trajectory_from_p,
    random_orthogonal, whiten, whitening_error,
};
pub use free::{
    embedding_metrics, free_embedding_optimize, free_embedding_optimize_from, FreeEmbeddingConfig, FreeEmbeddingResult,
    FreeEmbeddingStep,
};

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{covariance, sym_eigvals, DenseMatrix, EigenReport};

/// Tolerance on `covariance(X) == I` for the whitened-input check.
pub const WHITENING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    ClosedFormExpm,
    GradientDescentLinear,
    FeatureSpaceUpdate,
    MlpTraining,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    /// Continuous time for the closed form, `step·η` for descent.
    pub time: f64,
    /// Non-ascending.
    pub singular_values: Vec<f64>,
    pub eigen: EigenReport,
    /// `W(t)` for weight dynamics, `H` for feature dynamics.
    pub state: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct DynamicsRun {
    pub kind: TrajectoryKind,
    pub snapshots: Vec<Snapshot>,
}

/// Per-snapshot ratios recorded by the verifiers.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub step: usize,
    /// `s_{d+1}/s_d`: smaller over larger across the split.
    pub across_gap: f64,
    /// `s_d/s_{d+1}`: the same pair inverted.
    pub across_gap_inverse: f64,
    /// `s_min/s_max`.
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollapseVerdict {
    /// Every smaller/larger ratio is non-increasing across snapshots.
    pub monotone_ratio_ok: bool,
    /// Final `s_{d+1}/s_d`.
    pub vanishing_ratio_estimate: f64,
    /// Final `s_d/s_{d+1}`, reported alongside since the two index readings
    /// of the limit statement disagree.
    pub inverse_ratio_estimate: f64,
    /// Number of directions above the split (1-based `d`).
    pub d_split: usize,
    /// Largest relative `|λ^C − σ²|` when the eigenvalue identity was checked.
    pub max_identity_error: Option<f64>,
    pub identity_ok: Option<bool>,
    pub details: Vec<RatioRow>,
}

/// Position of the largest gap in a non-ascending sequence, as the number of
/// entries before it.
pub fn largest_gap_split(values: &[f64]) -> usize {
    values
        .windows(2)
        .enumerate()
        .fold((1, f64::NEG_INFINITY), |best, (k, w)| {
            let gap = w[0] - w[1];
            if gap > best.1 {
                (k + 1, gap)
            } else {
                best
            }
        })
        .0
}

/// Relative size below which singular values are dominated by rounding in
/// the state itself.
const RESOLUTION_FLOOR: f64 = 1e-12;

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

/// Ratio checks on a sequence of non-ascending spectra.
fn verify_sequences(steps: &[usize], seqs: &[Vec<f64>], d_split: usize, tol: f64) -> CollapseVerdict {
    let mut monotone = true;
    for pair in seqs.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let len = prev.len().min(next.len());
        let top = (
            prev.first().map_or(0.0, |v| v.abs()),
            next.first().map_or(0.0, |v| v.abs()),
        );
        // Values below the floor are not resolved and their ratios carry no signal.
        let resolved = |j: usize| prev[j].abs() > RESOLUTION_FLOOR * top.0 && next[j].abs() > RESOLUTION_FLOOR * top.1;
        for i in 0..len {
            for j in (i + 1..len).take_while(|&j| resolved(j)) {
                let r0 = ratio(prev[j], prev[i]);
                let r1 = ratio(next[j], next[i]);
                if r1 > r0 + tol * r0.abs() {
                    monotone = false;
                }
            }
        }
    }
    let d = d_split.max(1);
    let details: Vec<RatioRow> = steps
        .iter()
        .zip(seqs)
        .map(|(&step, s)| {
            let (large, small) = if d < s.len() { (s[d - 1], s[d]) } else { (1.0, 1.0) };
            RatioRow {
                step,
                across_gap: ratio(small, large),
                across_gap_inverse: ratio(large, small),
                spread: ratio(*s.last().unwrap_or(&1.0), *s.first().unwrap_or(&1.0)),
            }
        })
        .collect();
    let last = details.last();
    CollapseVerdict {
        monotone_ratio_ok: monotone,
        vanishing_ratio_estimate: last.map_or(1.0, |r| r.across_gap),
        inverse_ratio_estimate: last.map_or(1.0, |r| r.across_gap_inverse),
        d_split: d,
        max_identity_error: None,
        identity_ok: None,
        details,
    }
}

/// Checks that every smaller/larger singular-value ratio is non-increasing
/// (relative tolerance `tol`) and reports the ratio across the `d_split` gap.
pub fn verify_lemma1(run: &DynamicsRun, d_split: usize, tol: f64) -> CollapseVerdict {
    let steps: Vec<usize> = run.snapshots.iter().map(|s| s.step).collect();
    let seqs: Vec<Vec<f64>> = run.snapshots.iter().map(|s| s.singular_values.clone()).collect();
    verify_sequences(&steps, &seqs, d_split, tol)
}

/// For whitened `x`, checks `λ_i(covariance(XW(t))) == σ_i(W(t))²` per
/// snapshot (relative to `max(1, σ_1²)`), then runs the ratio checks on the
/// covariance spectra.
pub fn verify_theorem1(x: &DenseMatrix, run: &DynamicsRun, d_split: usize, tol: f64) -> Result<CollapseVerdict> {
    let dev = whitening_error(x);
    if dev > WHITENING_TOL {
        return Err(Error::InputNotWhitened(dev));
    }
    let mut worst: f64 = 0.0;
    let mut steps = Vec::new();
    let mut seqs = Vec::new();
    for snap in &run.snapshots {
        let xw = x.matmul(&snap.state)?;
        let lambdas = sym_eigvals(&covariance(&xw))?;
        let scale = snap.singular_values.first().map_or(1.0, |s| (s * s).max(1.0));
        for (l, s) in lambdas.iter().zip(&snap.singular_values) {
            worst = worst.max((l - s * s).abs() / scale);
        }
        steps.push(snap.step);
        seqs.push(lambdas);
    }
    let mut verdict = verify_sequences(&steps, &seqs, d_split, 1e-9);
    verdict.max_identity_error = Some(worst);
    verdict.identity_ok = Some(worst <= tol);
    Ok(verdict)
}

/// Writes `step,index,singular_value,eigenvalue,nesum`, one row per
/// snapshot and index.
pub fn write_dynamics_csv(run: &DynamicsRun, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "step,index,singular_value,eigenvalue,nesum")?;
    for snap in &run.snapshots {
        let n = snap.singular_values.len().max(snap.eigen.eigenvalues.len());
        for i in 0..n {
            let sv = snap.singular_values.get(i).map(|v| v.to_string()).unwrap_or_default();
            let ev = snap.eigen.eigenvalues.get(i).map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", snap.step, i + 1, sv, ev, snap.eigen.nesum)?;
        }
    }
    w.flush()?;
    Ok(())
}
