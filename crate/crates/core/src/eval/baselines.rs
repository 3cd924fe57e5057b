use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphio::{normalize, Dataset, NormKind, NormalizedOperator, SparseGraph};
use crate::net::{accuracy, affine, column_sums, cross_entropy, AdamState};
use crate::tensor::{spmm, spmm_transposed, DenseMatrix};

use super::train::epoch_seed;

/// Outcome of a comparator run, selected by validation accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub dropout_p: f64,
    /// L2 penalty `wd/2·‖W₀‖²` on the first layer, added to the loss.
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub early_stop_patience: usize,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            lr: 0.01,
            dropout_p: 0.5,
            weight_decay: 5e-4,
            epochs: 200,
            seed: 0,
            early_stop_patience: 0,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.hidden.contains(&0) || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid GCN config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid GCN config {self:?}")));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Graph convolution stack: `Z_l = Â(A_l W_l) + b_l`, ReLU between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub dims: Vec<usize>,
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnGradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GcnForward {
    pub logits: DenseMatrix,
    inputs: Vec<DenseMatrix>,
    gates: Vec<DenseMatrix>,
}

impl GcnParams {
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("invalid GCN dimensions {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(DenseMatrix::random_uniform(w[0], w[1], limit, &mut rng));
            biases.push(vec![0.0; w[1]]);
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    fn flat_sizes(&self) -> Vec<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice().len(), b.len()])
            .collect()
    }
}

fn dropout_in_place(m: &mut DenseMatrix, p: f64, rng: &mut ChaCha8Rng, relu: bool) -> DenseMatrix {
    let scale = 1.0 / (1.0 - p);
    let mut gate = DenseMatrix::zeros(m.rows(), m.cols());
    for (v, g) in m.as_mut_slice().iter_mut().zip(gate.as_mut_slice()) {
        let kept = p == 0.0 || rng.gen::<f64>() >= p;
        if kept && (!relu || *v > 0.0) {
            *g = scale;
            *v *= scale;
        } else {
            *v = 0.0;
        }
    }
    gate
}

/// Forward pass; in train mode dropout hits the input features and every
/// hidden activation.
pub fn gcn_forward(
    params: &GcnParams,
    op: &NormalizedOperator,
    x: &DenseMatrix,
    dropout_p: f64,
    seed: u64,
    train_mode: bool,
) -> Result<GcnForward> {
    if x.cols() != params.dims[0] || x.rows() != op.n_nodes() {
        return Err(Error::shape(format!(
            "GCN input {}x{} does not fit {} nodes / {} features",
            x.rows(),
            x.cols(),
            op.n_nodes(),
            params.dims[0]
        )));
    }
    let p = if train_mode { dropout_p } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = x.clone();
    if p > 0.0 {
        dropout_in_place(&mut a, p, &mut rng, false);
    }
    let n_layers = params.n_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut gates = Vec::with_capacity(n_layers - 1);
    for l in 0..n_layers {
        let u = a.matmul(&params.weights[l])?;
        let mut z = spmm(op, &u)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&params.biases[l]) {
                *v += b;
            }
        }
        inputs.push(a);
        if l + 1 == n_layers {
            return Ok(GcnForward {
                logits: z,
                inputs,
                gates,
            });
        }
        gates.push(dropout_in_place(&mut z, p, &mut rng, true));
        a = z;
    }
    unreachable!("the loop returns at the last layer")
}

/// Back-propagates `grad_logits` through the stack.
pub fn gcn_backward(
    params: &GcnParams,
    op: &NormalizedOperator,
    fwd: &GcnForward,
    grad_logits: &DenseMatrix,
) -> Result<GcnGradients> {
    let n_layers = params.n_layers();
    let mut weights = vec![DenseMatrix::zeros(0, 0); n_layers];
    let mut biases = vec![Vec::new(); n_layers];
    let mut dz = grad_logits.clone();
    for l in (0..n_layers).rev() {
        biases[l] = column_sums(&dz);
        let du = spmm_transposed(op, &dz)?;
        weights[l] = fwd.inputs[l].t_matmul(&du)?;
        if l > 0 {
            let mut da = du.matmul_t(&params.weights[l])?;
            for (v, g) in da.as_mut_slice().iter_mut().zip(fwd.gates[l - 1].as_slice()) {
                *v *= g;
            }
            dz = da;
        }
    }
    Ok(GcnGradients { weights, biases })
}

/// Cross-entropy on `mask` plus `wd/2·‖W₀‖²`, and its gradient.
#[allow(clippy::too_many_arguments)]
pub fn gcn_loss_and_grad(
    params: &GcnParams,
    op: &NormalizedOperator,
    x: &DenseMatrix,
    labels: &[i64],
    mask: &[usize],
    weight_decay: f64,
    dropout_p: f64,
    seed: u64,
) -> Result<(f64, GcnGradients)> {
    let fwd = gcn_forward(params, op, x, dropout_p, seed, dropout_p > 0.0)?;
    let (ce, grad_logits) = cross_entropy(&fwd.logits, labels, mask)?;
    let mut grads = gcn_backward(params, op, &fwd, &grad_logits)?;
    let w0 = &params.weights[0];
    let l2 = 0.5 * weight_decay * w0.as_slice().iter().map(|v| v * v).sum::<f64>();
    grads.weights[0].axpy(weight_decay, w0);
    Ok((ce + l2, grads))
}

/// Eval-mode logits of a trained GCN on any graph with matching features.
pub fn gcn_predict(params: &GcnParams, op: &NormalizedOperator, x: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(gcn_forward(params, op, x, 0.0, 0, false)?.logits)
}

fn apply_adam(
    adam: &mut AdamState,
    weights: &mut [DenseMatrix],
    biases: &mut [Vec<f64>],
    gw: &[DenseMatrix],
    gb: &[Vec<f64>],
) {
    let mut ps: Vec<&mut [f64]> = Vec::with_capacity(weights.len() * 2);
    for (w, b) in weights.iter_mut().zip(biases.iter_mut()) {
        ps.push(w.as_mut_slice());
        ps.push(b.as_mut_slice());
    }
    let gs: Vec<&[f64]> = gw
        .iter()
        .zip(gb)
        .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
        .collect();
    adam.update(&mut ps, &gs);
}

struct Selector {
    summary: FitSummary,
    patience: usize,
}

impl Selector {
    fn new(patience: usize) -> Self {
        Self {
            summary: FitSummary {
                best_epoch: 0,
                best_val_acc: f64::NEG_INFINITY,
                test_acc: 0.0,
                epochs_run: 0,
            },
            patience,
        }
    }

    /// Records an epoch; returns `(improved, stop)`.
    fn observe(&mut self, epoch: usize, logits: &DenseMatrix, data: &Dataset) -> (bool, bool) {
        let val = if data.val_idx.is_empty() {
            0.0
        } else {
            accuracy(logits, &data.labels, &data.val_idx)
        };
        self.summary.epochs_run = epoch;
        if val > self.summary.best_val_acc {
            self.summary.best_val_acc = val;
            self.summary.best_epoch = epoch;
            self.summary.test_acc = if data.test_idx.is_empty() {
                0.0
            } else {
                accuracy(logits, &data.labels, &data.test_idx)
            };
            (true, false)
        } else {
            (
                false,
                self.patience > 0 && epoch - self.summary.best_epoch >= self.patience,
            )
        }
    }
}

/// Full-batch GCN training on `op`, model selected by validation accuracy.
pub fn train_gcn_on(cfg: &GcnConfig, op: &NormalizedOperator, data: &Dataset) -> Result<(GcnParams, FitSummary)> {
    cfg.validate()?;
    let mut dims = vec![data.n_features()];
    dims.extend(&cfg.hidden);
    dims.push(data.n_classes);
    let mut params = GcnParams::init(&dims, cfg.seed)?;
    let mut adam = AdamState::with_sizes(&params.flat_sizes(), cfg.lr, 0.0);
    let mut best = params.clone();
    let mut sel = Selector::new(cfg.early_stop_patience);
    for epoch in 1..=cfg.epochs {
        let (loss, grads) = gcn_loss_and_grad(
            &params,
            op,
            &data.features,
            &data.labels,
            &data.train_idx,
            cfg.weight_decay,
            cfg.dropout_p,
            epoch_seed(cfg.seed, epoch),
        )?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: epoch,
                what: format!("GCN loss is {loss}"),
            });
        }
        apply_adam(
            &mut adam,
            &mut params.weights,
            &mut params.biases,
            &grads.weights,
            &grads.biases,
        );
        let logits = gcn_predict(&params, op, &data.features)?;
        let (improved, stop) = sel.observe(epoch, &logits, data);
        if improved {
            best = params.clone();
        }
        if stop {
            break;
        }
    }
    Ok((best, sel.summary))
}

/// GCN with the self-loop renormalized operator of `g`.
pub fn gcn_comparator(cfg: &GcnConfig, g: &SparseGraph, data: &Dataset) -> Result<(GcnParams, FitSummary)> {
    check_nodes(g, data)?;
    train_gcn_on(cfg, &normalize(g, NormKind::SymSelfLoops), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgcConfig {
    /// Propagation steps; 0 gives logistic regression on raw features.
    pub k: usize,
    pub lr: f64,
    /// L2 penalty `wd/2·‖W‖²` added to the loss.
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgcConfig {
    fn default() -> Self {
        Self {
            k: 2,
            lr: 0.2,
            weight_decay: 5e-6,
            epochs: 100,
            seed: 0,
        }
    }
}

impl SgcConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// `Â^k X` with the self-loop renormalized operator.
pub fn sgc_propagate(g: &SparseGraph, x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let op = normalize(g, NormKind::SymSelfLoops);
    let mut out = x.clone();
    for _ in 0..k {
        out = spmm(&op, &out)?;
    }
    Ok(out)
}

/// Linear softmax classifier on precomputed features.
pub fn train_linear(
    cfg: &SgcConfig,
    features: &DenseMatrix,
    data: &Dataset,
) -> Result<((DenseMatrix, Vec<f64>), FitSummary)> {
    if cfg.epochs == 0 || !(cfg.lr > 0.0) || !(cfg.weight_decay >= 0.0) {
        return Err(Error::InvalidConfig(format!("invalid SGC config {cfg:?}")));
    }
    let (f, c) = (features.cols(), data.n_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let limit = (6.0 / (f + c) as f64).sqrt();
    let mut w = vec![DenseMatrix::random_uniform(f, c, limit, &mut rng)];
    let mut b = vec![vec![0.0; c]];
    let mut adam = AdamState::with_sizes(&[f * c, c], cfg.lr, 0.0);
    let mut best = (w[0].clone(), b[0].clone());
    let mut sel = Selector::new(0);
    for epoch in 1..=cfg.epochs {
        let logits = affine(features, &w[0], &b[0])?;
        let (ce, grad_logits) = cross_entropy(&logits, &data.labels, &data.train_idx)?;
        if !ce.is_finite() {
            return Err(Error::Divergence {
                step: epoch,
                what: format!("SGC loss is {ce}"),
            });
        }
        let mut gw = features.t_matmul(&grad_logits)?;
        gw.axpy(cfg.weight_decay, &w[0]);
        let gb = column_sums(&grad_logits);
        apply_adam(&mut adam, &mut w, &mut b, &[gw], &[gb]);
        let logits = affine(features, &w[0], &b[0])?;
        if sel.observe(epoch, &logits, data).0 {
            best = (w[0].clone(), b[0].clone());
        }
    }
    Ok((best, sel.summary))
}

pub fn sgc_comparator(cfg: &SgcConfig, g: &SparseGraph, data: &Dataset) -> Result<FitSummary> {
    check_nodes(g, data)?;
    let feats = sgc_propagate(g, &data.features, cfg.k)?;
    Ok(train_linear(cfg, &feats, data)?.1)
}

fn check_nodes(g: &SparseGraph, data: &Dataset) -> Result<()> {
    if g.n_nodes() != data.n_nodes() {
        return Err(Error::shape(format!(
            "graph has {} nodes, dataset has {}",
            g.n_nodes(),
            data.n_nodes()
        )));
    }
    Ok(())
}
