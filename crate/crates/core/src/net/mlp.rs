use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Weights and biases of an MLP encoder followed by a linear classifier.
///
/// `dims = [F, hidden.., D, C]`. Layer `l` maps `dims[l] -> dims[l+1]`
/// as `a·W_l + b_l`. Hidden layers use ReLU; the last encoder layer is
/// linear and its output is the embedding `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub dims: Vec<usize>,
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Gradients mirroring [`MlpParams`], plus the total gradient at `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub grad_h: DenseMatrix,
}

impl GradientBundle {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(DenseMatrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
            && self.grad_h.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        let w = self.weights.iter().map(DenseMatrix::max_abs).fold(0.0, f64::max);
        let b = self.biases.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        w.max(b)
    }
}

/// Intermediate values kept by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each layer (after activation and dropout).
    inputs: Vec<DenseMatrix>,
    /// Per hidden layer: the derivative of activation and dropout combined.
    gates: Vec<DenseMatrix>,
}

/// Output of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub h: DenseMatrix,
    pub logits: DenseMatrix,
    pub cache: ForwardCache,
}

impl MlpParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least [F, D, C] dimensions, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("zero-width layer in {dims:?}")));
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

    pub fn embedding_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    pub fn n_classes(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn n_parameters(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros_like(&self) -> GradientBundle {
        GradientBundle {
            weights: self
                .weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            grad_h: DenseMatrix::zeros(0, self.embedding_dim()),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.weights.len() + 1 != self.dims.len() || self.biases.len() != self.weights.len() {
            return Err(Error::shape("layer count disagrees with dims"));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.shape() != (self.dims[l], self.dims[l + 1]) || b.len() != self.dims[l + 1] {
                return Err(Error::shape(format!(
                    "layer {l} shape disagrees with dims {:?}",
                    self.dims
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn affine(a: &DenseMatrix, w: &DenseMatrix, b: &[f64]) -> Result<DenseMatrix> {
    let mut z = a.matmul(w)?;
    for r in 0..z.rows() {
        for (v, bb) in z.row_mut(r).iter_mut().zip(b) {
            *v += bb;
        }
    }
    Ok(z)
}

pub(crate) fn column_sums(m: &DenseMatrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (a, v) in s.iter_mut().zip(m.row(r)) {
            *a += v;
        }
    }
    s
}

/// Runs the network. Dropout with probability `dropout_p` is applied to the
/// hidden activations only when `train_mode` is set, with kept units scaled
/// by `1/(1-p)`; masks are drawn from a generator seeded with `seed`.
pub fn forward(
    params: &MlpParams,
    x: &DenseMatrix,
    dropout_p: f64,
    seed: u64,
    train_mode: bool,
) -> Result<ForwardOutput> {
    if x.cols() != params.dims[0] {
        return Err(Error::shape(format!(
            "input has {} features, network expects {}",
            x.cols(),
            params.dims[0]
        )));
    }
    let n_layers = params.n_layers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let use_dropout = train_mode && dropout_p > 0.0;
    let keep_scale = if use_dropout { 1.0 / (1.0 - dropout_p) } else { 1.0 };

    let mut inputs = Vec::with_capacity(n_layers);
    let mut gates = Vec::with_capacity(n_layers.saturating_sub(2));
    let mut a = x.clone();
    for l in 0..n_layers - 2 {
        let z = affine(&a, &params.weights[l], &params.biases[l])?;
        let mut gate = DenseMatrix::zeros(z.rows(), z.cols());
        let mut act = z;
        for (v, g) in act.as_mut_slice().iter_mut().zip(gate.as_mut_slice()) {
            let kept = !use_dropout || rng.gen::<f64>() >= dropout_p;
            if *v > 0.0 && kept {
                *g = keep_scale;
                *v *= keep_scale;
            } else {
                *v = 0.0;
            }
        }
        inputs.push(a);
        gates.push(gate);
        a = act;
    }
    let h = affine(&a, &params.weights[n_layers - 2], &params.biases[n_layers - 2])?;
    inputs.push(a);
    let logits = affine(&h, &params.weights[n_layers - 1], &params.biases[n_layers - 1])?;
    inputs.push(h.clone());
    Ok(ForwardOutput {
        h,
        logits,
        cache: ForwardCache { inputs, gates },
    })
}

/// Eval-mode embeddings only, skipping the classifier.
pub fn encode(params: &MlpParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() != params.dims[0] {
        return Err(Error::shape(format!(
            "input has {} features, network expects {}",
            x.cols(),
            params.dims[0]
        )));
    }
    let n_layers = params.n_layers();
    let mut a = x.clone();
    for l in 0..n_layers - 2 {
        a = affine(&a, &params.weights[l], &params.biases[l])?.map(|v| v.max(0.0));
    }
    affine(&a, &params.weights[n_layers - 2], &params.biases[n_layers - 2])
}

/// Gradients of `loss(logits) + <external_grad_h, H>` with respect to every
/// parameter, given `grad_logits = ∂loss/∂logits`.
pub fn backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_logits: &DenseMatrix,
    external_grad_h: &DenseMatrix,
) -> Result<GradientBundle> {
    let n_layers = params.n_layers();
    let h = &cache.inputs[n_layers - 1];
    if grad_logits.shape() != (h.rows(), params.n_classes()) {
        return Err(Error::shape("grad_logits shape disagrees with the forward pass"));
    }
    if external_grad_h.shape() != h.shape() {
        return Err(Error::shape(format!(
            "external grad_H is {}x{}, H is {}x{}",
            external_grad_h.rows(),
            external_grad_h.cols(),
            h.rows(),
            h.cols()
        )));
    }
    let mut w_grads = vec![DenseMatrix::zeros(0, 0); n_layers];
    let mut b_grads = vec![Vec::new(); n_layers];

    let last = n_layers - 1;
    w_grads[last] = h.t_matmul(grad_logits)?;
    b_grads[last] = column_sums(grad_logits);
    let mut g = grad_logits.matmul_t(&params.weights[last])?;
    g.add_assign(external_grad_h);
    let grad_h = g.clone();

    for l in (0..last).rev() {
        w_grads[l] = cache.inputs[l].t_matmul(&g)?;
        b_grads[l] = column_sums(&g);
        if l > 0 {
            let mut ga = g.matmul_t(&params.weights[l])?;
            for (v, gate) in ga.as_mut_slice().iter_mut().zip(cache.gates[l - 1].as_slice()) {
                *v *= gate;
            }
            g = ga;
        }
    }
    Ok(GradientBundle {
        weights: w_grads,
        biases: b_grads,
        grad_h,
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Mean negative log-likelihood over `mask` and its gradient (zero outside
/// the mask).
pub fn cross_entropy(logits: &DenseMatrix, labels: &[i64], mask: &[usize]) -> Result<(f64, DenseMatrix)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if labels.len() != logits.rows() {
        return Err(Error::shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let c = logits.cols();
    let inv = 1.0 / mask.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), c);
    let mut loss = 0.0;
    for &i in mask {
        let y = labels[i];
        if y < 0 || y as usize >= c {
            return Err(Error::shape(format!("node {i} in loss mask has label {y}")));
        }
        let row = logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let log_z = m + sum.ln();
        loss += log_z - row[y as usize];
        let g = grad.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = (row[k] - log_z).exp() * inv;
        }
        g[y as usize] -= inv;
    }
    Ok((loss * inv, grad))
}

/// Fraction of `idx` whose arg-max logit equals the label.
pub fn accuracy(logits: &DenseMatrix, labels: &[i64], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let correct = idx
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let arg = row
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (k, &v)| if v > best.1 { (k, v) } else { best },
                )
                .0;
            labels[i] == arg as i64
        })
        .count();
    correct as f64 / idx.len() as f64
}
