use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::graphio::{mask_edges, select_isolated, Dataset, SparseGraph};
use crate::reg::{OrthoRegParams, PoolingMode, RegularizerSpec};

use super::baselines::{gcn_comparator, gcn_predict, sgc_comparator, GcnConfig, SgcConfig};
use super::report::{mean_std, run_trials, RunReport};
use super::train::{evaluate, train, TrainConfig};
use crate::graphio::{normalize, NormKind};
use crate::net::accuracy;

/// Frozen OrthoReg hyperparameters for the citation benchmarks.
pub fn orthoreg_preset(dataset: &str) -> Option<OrthoRegParams> {
    let (alpha, beta) = match dataset.to_ascii_lowercase().as_str() {
        "cora" => (2e-3, 1e-6),
        "citeseer" => (1e-3, 1e-6),
        "pubmed" => (2e-6, 2e-6),
        _ => return None,
    };
    Some(OrthoRegParams {
        alpha,
        beta,
        t: 2,
        pooling: PoolingMode::Average,
        center: true,
    })
}

fn config_json<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("configs serialize")
}

/// Test accuracy of `cfg` over `trials` seeds.
pub fn mlp_report(name: &str, cfg: &TrainConfig, g: &SparseGraph, data: &Dataset, trials: usize) -> Result<RunReport> {
    run_trials(name, trials, cfg.seed, config_json(cfg), |_, seed| {
        Ok(train(&cfg.with_seed(seed), g, data)?.1.test_acc)
    })
}

pub fn gcn_report(name: &str, cfg: &GcnConfig, g: &SparseGraph, data: &Dataset, trials: usize) -> Result<RunReport> {
    run_trials(name, trials, cfg.seed, config_json(cfg), |_, seed| {
        Ok(gcn_comparator(&cfg.with_seed(seed), g, data)?.1.test_acc)
    })
}

pub fn sgc_report(name: &str, cfg: &SgcConfig, g: &SparseGraph, data: &Dataset, trials: usize) -> Result<RunReport> {
    run_trials(name, trials, cfg.seed, config_json(cfg), |_, seed| {
        Ok(sgc_comparator(&cfg.with_seed(seed), g, data)?.test_acc)
    })
}

/// Training problem left after removing low-degree nodes.
#[derive(Debug, Clone)]
pub struct ColdStartSplit {
    pub threshold_degree: usize,
    /// Original ids of every isolated node.
    pub isolated: Vec<usize>,
    /// Original ids of isolated nodes in the test split; the evaluation set.
    pub isolated_test: Vec<usize>,
    /// Original ids of the remaining nodes, in new-index order.
    pub kept: Vec<usize>,
    /// Subgraph induced on `kept`, re-indexed.
    pub graph: SparseGraph,
    /// `kept` nodes only; training uses up to `per_class` labels per class.
    pub data: Dataset,
}

/// Isolates the bottom-`percentile` degree nodes and builds the training
/// problem on the rest. Training labels are the original training nodes that
/// survive, topped up to `per_class` per class from unassigned kept nodes.
pub fn coldstart_split(
    g: &SparseGraph,
    data: &Dataset,
    percentile: f64,
    strict: bool,
    per_class: usize,
) -> Result<ColdStartSplit> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::InvalidConfig(format!(
            "percentile must lie in (0, 100), got {percentile}"
        )));
    }
    let iso = select_isolated(g, percentile, strict);
    let n = g.n_nodes();
    let removed: HashSet<usize> = iso.isolated.iter().copied().collect();
    let kept: Vec<usize> = (0..n).filter(|i| !removed.contains(i)).collect();
    let mut new_id = vec![usize::MAX; n];
    for (k, &i) in kept.iter().enumerate() {
        new_id[i] = k;
    }
    let edges: Vec<(usize, usize)> = iso
        .reduced
        .undirected_edges()
        .into_iter()
        .map(|(u, v)| (new_id[u], new_id[v]))
        .collect();
    let graph = SparseGraph::from_edges(kept.len(), &edges)?;

    let remap = |idx: &[usize]| -> Vec<usize> {
        idx.iter()
            .filter(|&&i| new_id[i] != usize::MAX)
            .map(|&i| new_id[i])
            .collect()
    };
    let val_idx = remap(&data.val_idx);
    let test_idx = remap(&data.test_idx);
    let mut assigned = vec![false; kept.len()];
    for &i in val_idx.iter().chain(&test_idx) {
        assigned[i] = true;
    }
    let mut candidates = remap(&data.train_idx);
    for &i in &candidates {
        assigned[i] = true;
    }
    candidates.extend((0..kept.len()).filter(|&i| !assigned[i]));
    let sub = Dataset {
        features: data.features.select_rows(&kept),
        labels: kept.iter().map(|&i| data.labels[i]).collect(),
        n_classes: data.n_classes,
        train_idx: Vec::new(),
        val_idx,
        test_idx,
    };
    let train_idx = sub.per_class_prefix(&candidates, per_class);
    let sub = Dataset { train_idx, ..sub };
    sub.validate()?;

    let test: HashSet<usize> = data.test_idx.iter().copied().collect();
    let isolated_test: Vec<usize> = iso.isolated.iter().copied().filter(|i| test.contains(i)).collect();
    Ok(ColdStartSplit {
        threshold_degree: iso.threshold_degree,
        isolated: iso.isolated,
        isolated_test,
        kept,
        graph,
        data: sub,
    })
}

/// MLP-family model trained on the reduced problem, scored on isolated test
/// nodes from their features alone.
pub fn coldstart_experiment(
    name: &str,
    cfg: &TrainConfig,
    split: &ColdStartSplit,
    full: &Dataset,
    trials: usize,
) -> Result<RunReport> {
    if split.isolated_test.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(run_trials(name, trials, cfg.seed, config_json(cfg), |_, seed| {
        let (params, _) = train(&cfg.with_seed(seed), &split.graph, &split.data)?;
        evaluate(&params, &full.features, &full.labels, &split.isolated_test)
    })?
    .with_extra("n_isolated", json!(split.isolated.len()))
    .with_extra("n_isolated_test", json!(split.isolated_test.len()))
    .with_extra("threshold_degree", json!(split.threshold_degree)))
}

/// GCN trained on the reduced graph; isolated nodes have no known edges, so
/// inference on them sees only their self-loops.
pub fn coldstart_gcn(
    name: &str,
    cfg: &GcnConfig,
    split: &ColdStartSplit,
    full: &Dataset,
    trials: usize,
) -> Result<RunReport> {
    if split.isolated_test.is_empty() {
        return Err(Error::EmptyMask);
    }
    let x = full.features.select_rows(&split.isolated_test);
    let labels: Vec<i64> = split.isolated_test.iter().map(|&i| full.labels[i]).collect();
    let local: Vec<usize> = (0..labels.len()).collect();
    let op = normalize(&SparseGraph::from_edges(labels.len(), &[])?, NormKind::SymSelfLoops);
    Ok(run_trials(name, trials, cfg.seed, config_json(cfg), |_, seed| {
        let (params, _) = gcn_comparator(&cfg.with_seed(seed), &split.graph, &split.data)?;
        let logits = gcn_predict(&params, &op, &x)?;
        Ok(accuracy(&logits, &labels, &local))
    })?
    .with_extra("n_isolated_test", json!(split.isolated_test.len())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub ratio: f64,
    pub orthoreg: RunReport,
    pub gcn: RunReport,
}

/// For each ratio and trial `t`, masks edges with seed `seed + t` and trains
/// both models with that seed.
pub fn robustness_sweep(
    cfg: &TrainConfig,
    gcn: &GcnConfig,
    g: &SparseGraph,
    data: &Dataset,
    ratios: &[f64],
    trials: usize,
) -> Result<Vec<RobustnessRow>> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidConfig(format!("mask ratio {r} outside [0, 1]")));
    }
    ratios
        .iter()
        .map(|&ratio| {
            let orthoreg = run_trials(
                &format!("mlp_reg@{ratio}"),
                trials,
                cfg.seed,
                config_json(cfg),
                |_, seed| {
                    let masked = mask_edges(g, ratio, seed);
                    Ok(train(&cfg.with_seed(seed), &masked, data)?.1.test_acc)
                },
            )?;
            let gcn = run_trials(
                &format!("gcn@{ratio}"),
                trials,
                gcn.seed,
                config_json(gcn),
                |_, seed| {
                    let masked = mask_edges(g, ratio, seed);
                    Ok(gcn_comparator(&gcn.with_seed(seed), &masked, data)?.1.test_acc)
                },
            )?;
            Ok(RobustnessRow { ratio, orthoreg, gcn })
        })
        .collect()
}

/// Variants of a tuned OrthoReg configuration: no regularizer, `α = 0`,
/// `β = 0`, and `T ∈ {1, 2, 3}` (the full model is `T = 2`).
pub fn ablation_suite(base: &TrainConfig, g: &SparseGraph, data: &Dataset, trials: usize) -> Result<Vec<RunReport>> {
    let RegularizerSpec::OrthoReg(p) = base.regularizer else {
        return Err(Error::InvalidConfig(
            "ablations need an OrthoReg base configuration".into(),
        ));
    };
    let with = |reg: RegularizerSpec| TrainConfig {
        regularizer: reg,
        ..base.clone()
    };
    let variants = [
        ("mlp", with(RegularizerSpec::None)),
        (
            "alpha=0",
            with(RegularizerSpec::OrthoReg(OrthoRegParams { alpha: 0.0, ..p })),
        ),
        (
            "beta=0",
            with(RegularizerSpec::OrthoReg(OrthoRegParams { beta: 0.0, ..p })),
        ),
        ("T=1", with(RegularizerSpec::OrthoReg(OrthoRegParams { t: 1, ..p }))),
        ("T=2", with(RegularizerSpec::OrthoReg(OrthoRegParams { t: 2, ..p }))),
        ("T=3", with(RegularizerSpec::OrthoReg(OrthoRegParams { t: 3, ..p }))),
    ];
    variants
        .iter()
        .map(|(name, cfg)| mlp_report(name, cfg, g, data, trials))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunePoint {
    pub alpha: f64,
    pub beta: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub alpha: f64,
    pub beta: f64,
    pub val_acc: f64,
    pub grid: Vec<TunePoint>,
}

/// The coarse grid: `α ∈ {5e-4, 1e-3, 2e-3, 5e-3}` times `α/β ∈ {1e2, 1e3, 1e4}`,
/// plus any `extra` pairs.
pub fn coarse_grid(extra: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for alpha in [5e-4, 1e-3, 2e-3, 5e-3] {
        for ratio in [1e2, 1e3, 1e4] {
            out.push((alpha, alpha / ratio));
        }
    }
    out.extend_from_slice(extra);
    out
}

/// Picks the `(α, β)` pair with the best mean validation accuracy over
/// `trials` seeds; earlier grid entries win ties.
pub fn tune_orthoreg(
    base: &TrainConfig,
    g: &SparseGraph,
    data: &Dataset,
    grid: &[(f64, f64)],
    trials: usize,
) -> Result<TuneResult> {
    let RegularizerSpec::OrthoReg(p) = base.regularizer else {
        return Err(Error::InvalidConfig(
            "tuning needs an OrthoReg base configuration".into(),
        ));
    };
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty tuning grid".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &(alpha, beta) in grid {
        let cfg = TrainConfig {
            regularizer: RegularizerSpec::OrthoReg(OrthoRegParams { alpha, beta, ..p }),
            ..base.clone()
        };
        let report = run_trials("tune", trials, cfg.seed, serde_json::Value::Null, |_, seed| {
            Ok(train(&cfg.with_seed(seed), g, data)?.1.best_val_acc)
        })?;
        points.push(TunePoint {
            alpha,
            beta,
            val_acc: report.mean,
        });
    }
    let best = points
        .iter()
        .fold(&points[0], |b, p| if p.val_acc > b.val_acc { p } else { b })
        .clone();
    Ok(TuneResult {
        alpha: best.alpha,
        beta: best.beta,
        val_acc: best.val_acc,
        grid: points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub name: String,
    pub epoch: usize,
    /// Seed-averaged `λ_i/λ_1`.
    pub mean_normalized: Vec<f64>,
    pub mean_nesum: f64,
    pub nesum_per_seed: Vec<f64>,
}

/// Correlation spectrum of `H` at `epoch`, averaged over `seeds` runs
/// starting at `cfg.seed`. Early stopping is disabled so every run reaches
/// the epoch.
pub fn spectral_diagnostic(
    name: &str,
    cfg: &TrainConfig,
    g: &SparseGraph,
    data: &Dataset,
    epoch: usize,
    seeds: usize,
) -> Result<SpectrumSummary> {
    if epoch == 0 || seeds == 0 {
        return Err(Error::InvalidConfig(
            "spectral diagnostic needs epoch ≥ 1 and seeds ≥ 1".into(),
        ));
    }
    let run_cfg = TrainConfig {
        epochs: epoch,
        eigens_every: epoch,
        early_stop_patience: 0,
        ..cfg.clone()
    };
    let reports: Vec<_> = (0..seeds)
        .map(|t| {
            let (_, hist) = train(&run_cfg.with_seed(cfg.seed.wrapping_add(t as u64)), g, data)?;
            hist.eigen_at(epoch)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("no eigen report at epoch {epoch}")))
        })
        .collect::<Result<_>>()?;
    let d = reports[0].eigenvalues.len();
    let mut mean_normalized = vec![0.0; d];
    for r in &reports {
        for (m, v) in mean_normalized.iter_mut().zip(r.normalized()) {
            *m += v / seeds as f64;
        }
    }
    let nesum_per_seed: Vec<f64> = reports.iter().map(|r| r.nesum).collect();
    Ok(SpectrumSummary {
        name: name.to_string(),
        epoch,
        mean_normalized,
        mean_nesum: mean_std(&nesum_per_seed).0,
        nesum_per_seed,
    })
}
