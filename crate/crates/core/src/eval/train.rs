use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphio::{Dataset, SparseGraph};
use crate::net::{accuracy, adam_step, backward, cross_entropy, forward, AdamState, MlpParams};
use crate::reg::{GraphOperators, RegularizerSpec};
use crate::tensor::{DenseMatrix, EigenReport};

/// Hyperparameters of one GR-MLP training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regularizer: RegularizerSpec,
    /// Encoder widths; the last entry is the embedding dimension `D`.
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub dropout_p: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Record the correlation spectrum of `H` every this many epochs (0 = never).
    pub eigens_every: usize,
    /// Stop after this many epochs without a validation improvement (0 = never).
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regularizer: RegularizerSpec::None,
            hidden: vec![256, 512],
            lr: 0.01,
            dropout_p: 0.5,
            weight_decay: 0.0,
            epochs: 500,
            seed: 0,
            eigens_every: 0,
            early_stop_patience: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "invalid encoder widths {:?}",
                self.hidden
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight decay must be non-negative".into()));
        }
        self.regularizer.validate()
    }

    pub fn dims(&self, n_features: usize, n_classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(n_features);
        dims.extend(&self.hidden);
        dims.push(n_classes);
        dims
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub sup_loss: f64,
    pub reg_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigen: Option<EigenReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Test accuracy of the model selected by validation accuracy.
    pub test_acc: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn eigen_at(&self, epoch: usize) -> Option<&EigenReport> {
        self.records
            .iter()
            .find(|r| r.epoch == epoch)
            .and_then(|r| r.eigen.as_ref())
    }

    pub fn last_eigen(&self) -> Option<&EigenReport> {
        self.records.iter().rev().find_map(|r| r.eigen.as_ref())
    }
}

pub(crate) fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// Eval-mode accuracy on `idx`; uses features only.
pub fn evaluate(params: &MlpParams, features: &DenseMatrix, labels: &[i64], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let sub = features.select_rows(idx);
    let out = forward(params, &sub, 0.0, 0, false)?;
    let sub_labels: Vec<i64> = idx.iter().map(|&i| labels[i]).collect();
    let local: Vec<usize> = (0..idx.len()).collect();
    Ok(accuracy(&out.logits, &sub_labels, &local))
}

fn acc_or_zero(logits: &DenseMatrix, labels: &[i64], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        0.0
    } else {
        accuracy(logits, labels, idx)
    }
}

/// Full-batch training of an MLP with an optional graph regularizer on the
/// embeddings. The returned parameters are those of the epoch with the best
/// validation accuracy (ties keep the earlier epoch).
pub fn train(cfg: &TrainConfig, graph: &SparseGraph, data: &Dataset) -> Result<(MlpParams, TrainHistory)> {
    cfg.validate()?;
    if graph.n_nodes() != data.n_nodes() {
        return Err(Error::shape(format!(
            "graph has {} nodes, dataset has {}",
            graph.n_nodes(),
            data.n_nodes()
        )));
    }
    if data.train_idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let ops = GraphOperators::new(graph);
    let mut params = MlpParams::init(&cfg.dims(data.n_features(), data.n_classes), cfg.seed)?;
    let mut adam = AdamState::new(&params, cfg.lr, cfg.weight_decay);
    let mut best = params.clone();
    let mut history = TrainHistory {
        records: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_acc: f64::NEG_INFINITY,
        test_acc: 0.0,
        stopped_early: false,
    };

    for epoch in 1..=cfg.epochs {
        let out = forward(
            &params,
            &data.features,
            cfg.dropout_p,
            epoch_seed(cfg.seed, epoch),
            true,
        )?;
        let (sup_loss, grad_logits) = cross_entropy(&out.logits, &data.labels, &data.train_idx)?;
        let (reg_loss, grad_h) = cfg.regularizer.evaluate(&out.h, &ops)?;
        let train_loss = sup_loss + reg_loss;
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                step: epoch,
                what: format!("training loss is {train_loss}"),
            });
        }
        let grads = backward(&params, &out.cache, &grad_logits, &grad_h)?;
        if !grads.is_finite() {
            return Err(Error::Divergence {
                step: epoch,
                what: "non-finite gradient".into(),
            });
        }
        adam_step(&mut params, &grads, &mut adam);

        let eval = forward(&params, &data.features, 0.0, 0, false)?;
        let val_acc = acc_or_zero(&eval.logits, &data.labels, &data.val_idx);
        let test_acc = acc_or_zero(&eval.logits, &data.labels, &data.test_idx);
        let eigen = if cfg.eigens_every > 0 && epoch % cfg.eigens_every == 0 {
            Some(EigenReport::of_embeddings(epoch, &eval.h)?)
        } else {
            None
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            sup_loss,
            reg_loss,
            val_acc,
            test_acc,
            eigen,
        });
        if val_acc > history.best_val_acc {
            history.best_val_acc = val_acc;
            history.best_epoch = epoch;
            history.test_acc = test_acc;
            best = params.clone();
        } else if cfg.early_stop_patience > 0 && epoch - history.best_epoch >= cfg.early_stop_patience {
            history.stopped_early = true;
            break;
        }
    }
    log::debug!(
        "trained {} epochs, best epoch {} (val {:.4}, test {:.4})",
        history.records.len(),
        history.best_epoch,
        history.best_val_acc,
        history.test_acc
    );
    Ok((best, history))
}
