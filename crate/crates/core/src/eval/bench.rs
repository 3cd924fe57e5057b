use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphio::{normalize, NormKind, NormalizedOperator, SparseGraph};
use crate::net::{forward, MlpParams};
use crate::tensor::DenseMatrix;

use super::baselines::GcnParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Number of weight layers; each must be at least 2.
    pub depths: Vec<usize>,
    pub batch: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            depths: vec![2, 3, 4],
            batch: 64,
            hidden: 256,
            n_classes: 3,
            reps: 10,
            warmup: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub depth: usize,
    pub mlp_s: f64,
    pub gcn_s: f64,
    /// `gcn_s / mlp_s`.
    pub ratio: f64,
    /// Nodes whose features the GCN must read for the batch.
    pub receptive_field: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_median(reps: usize, warmup: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(median(times))
}

/// Node sets per layer for an `L`-layer GCN on `batch`: entry `l` holds the
/// nodes whose layer-`l` input is needed, so entry `L` is the batch itself.
pub fn receptive_layers(g: &SparseGraph, batch: &[usize], depth: usize) -> Vec<Vec<usize>> {
    let mut in_set = vec![false; g.n_nodes()];
    let mut layers = vec![batch.to_vec()];
    for &i in batch {
        in_set[i] = true;
    }
    let mut current = batch.to_vec();
    for _ in 0..depth {
        let mut next = current.clone();
        for &i in &current {
            for &j in g.neighbors(i) {
                if !in_set[j] {
                    in_set[j] = true;
                    next.push(j);
                }
            }
        }
        layers.push(next.clone());
        current = next;
    }
    layers.reverse();
    layers
}

/// GCN logits for the nodes of `layers[depth]`, reading features of
/// `layers[0]` only.
pub fn gcn_forward_batch(
    params: &GcnParams,
    op: &NormalizedOperator,
    x: &DenseMatrix,
    layers: &[Vec<usize>],
) -> Result<DenseMatrix> {
    let depth = params.n_layers();
    if layers.len() != depth + 1 {
        return Err(Error::shape("receptive layers do not match the GCN depth"));
    }
    let mut pos = vec![usize::MAX; op.n_nodes()];
    let mut h = x.select_rows(&layers[0]);
    for l in 0..depth {
        for (k, &i) in layers[l].iter().enumerate() {
            pos[i] = k;
        }
        let u = h.matmul(&params.weights[l])?;
        let out_nodes = &layers[l + 1];
        let mut z = DenseMatrix::zeros(out_nodes.len(), u.cols());
        for (r, &i) in out_nodes.iter().enumerate() {
            let (cols, vals) = op.matrix().row(i);
            let row = z.row_mut(r);
            for (&j, &a) in cols.iter().zip(vals) {
                for (o, v) in row.iter_mut().zip(u.row(pos[j])) {
                    *o += a * v;
                }
            }
            for (o, b) in row.iter_mut().zip(&params.biases[l]) {
                *o += b;
            }
        }
        if l + 1 < depth {
            z = z.map(|v| v.max(0.0));
        }
        h = z;
    }
    Ok(h)
}

/// Median wall-clock of batched eval-mode inference: MLP forward on the batch
/// rows versus GCN forward over the batch's receptive field.
pub fn inference_benchmark(g: &SparseGraph, features: &DenseMatrix, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let n = g.n_nodes();
    if features.rows() != n {
        return Err(Error::shape("feature rows do not match the graph"));
    }
    if cfg.batch == 0 || cfg.batch > n || cfg.reps == 0 || cfg.hidden == 0 || cfg.n_classes == 0 {
        return Err(Error::InvalidConfig(format!("invalid benchmark config {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch: Vec<usize> = sample(&mut rng, n, cfg.batch).into_vec();
    let op = normalize(g, NormKind::SymSelfLoops);
    let mut rows = Vec::new();
    for &depth in &cfg.depths {
        if depth < 2 {
            return Err(Error::InvalidConfig(format!(
                "benchmark depth must be at least 2, got {depth}"
            )));
        }
        let mut dims = vec![features.cols()];
        dims.extend(std::iter::repeat(cfg.hidden).take(depth - 1));
        dims.push(cfg.n_classes);
        let mlp = MlpParams::init(&dims, cfg.seed)?;
        let gcn = GcnParams::init(&dims, cfg.seed)?;
        let mlp_s = time_median(cfg.reps, cfg.warmup, || {
            let x = features.select_rows(&batch);
            forward(&mlp, &x, 0.0, 0, false).map(|_| ())
        })?;
        let mut field = 0;
        let gcn_s = time_median(cfg.reps, cfg.warmup, || {
            let layers = receptive_layers(g, &batch, depth);
            field = layers[0].len();
            gcn_forward_batch(&gcn, &op, features, &layers).map(|_| ())
        })?;
        log::info!("depth {depth}: mlp {mlp_s:.3e}s, gcn {gcn_s:.3e}s, field {field}");
        rows.push(BenchRow {
            depth,
            mlp_s,
            gcn_s,
            ratio: gcn_s / mlp_s,
            receptive_field: field,
        });
    }
    Ok(rows)
}
