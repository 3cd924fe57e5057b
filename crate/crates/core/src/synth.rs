//! Seeded synthetic graphs and datasets: ring, path, star, stochastic block
//! models, uniform random graphs and a contextual SBM with Gaussian features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphio::{Dataset, SparseGraph};
use crate::tensor::{standard_normal, DenseMatrix};

pub fn ring(n: usize) -> SparseGraph {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    SparseGraph::from_edges(n, &edges).expect("ring edges in range")
}

pub fn path(n: usize) -> SparseGraph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    SparseGraph::from_edges(n, &edges).expect("path edges in range")
}

/// Node 0 joined to `leaves` leaf nodes.
pub fn star(leaves: usize) -> SparseGraph {
    let edges: Vec<_> = (1..=leaves).map(|l| (0, l)).collect();
    SparseGraph::from_edges(leaves + 1, &edges).expect("star edges in range")
}

/// Block of each node when `n` nodes are split into `blocks` near-equal
/// contiguous groups.
pub fn block_assignment(n: usize, blocks: usize) -> Vec<usize> {
    (0..n).map(|i| i * blocks / n).collect()
}

/// Stochastic block model with contiguous near-equal blocks.
pub fn sbm(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> SparseGraph {
    let block = block_assignment(n, blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block[i] == block[j] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    SparseGraph::from_edges(n, &edges).expect("sbm edges in range")
}

/// Uniform random graph with exactly `m` distinct undirected edges.
pub fn random_graph(n: usize, m: usize, seed: u64) -> Result<SparseGraph> {
    if n < 2 || m > n * (n - 1) / 2 {
        return Err(Error::InvalidConfig(format!("cannot place {m} edges on {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    SparseGraph::from_edges(n, &edges)
}

/// Contextual SBM parameters.
#[derive(Debug, Clone)]
pub struct CsbmConfig {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub n_features: usize,
    /// Expected degree contributed by same-class neighbors.
    pub intra_degree: f64,
    /// Expected degree contributed by other-class neighbors.
    pub inter_degree: f64,
    /// Distance between class means relative to unit noise.
    pub signal: f64,
    pub train_per_class: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for CsbmConfig {
    fn default() -> Self {
        Self {
            n_nodes: 600,
            n_classes: 3,
            n_features: 40,
            intra_degree: 4.0,
            inter_degree: 1.0,
            signal: 1.0,
            train_per_class: 20,
            n_val: 100,
            n_test: 300,
            seed: 0,
        }
    }
}

/// Graph plus Gaussian features whose class means differ, with a
/// public-split style partition (first `train_per_class` of each class in a
/// shuffled order, then validation, then test).
pub fn csbm(cfg: &CsbmConfig) -> Result<(SparseGraph, Dataset)> {
    let n = cfg.n_nodes;
    let k = cfg.n_classes;
    if k == 0 || n < k {
        return Err(Error::InvalidConfig("need at least one node per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<i64> = (0..n).map(|i| (i % k) as i64).collect();
    let block_size = n as f64 / k as f64;
    let p_in = (cfg.intra_degree / block_size).min(1.0);
    let p_out = (cfg.inter_degree / (n as f64 - block_size).max(1.0)).min(1.0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, &edges)?;

    let f = cfg.n_features;
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..f).map(|_| standard_normal(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter().map(|x| x / norm * cfg.signal).collect()
        })
        .collect();
    let features = DenseMatrix::from_fn(n, f, |i, c| means[labels[i] as usize][c] + standard_normal(&mut rng));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut taken = vec![0usize; k];
    let mut train_idx = Vec::new();
    let mut rest = Vec::new();
    for &i in &order {
        let y = labels[i] as usize;
        if taken[y] < cfg.train_per_class {
            taken[y] += 1;
            train_idx.push(i);
        } else {
            rest.push(i);
        }
    }
    let n_val = cfg.n_val.min(rest.len());
    let val_idx = rest[..n_val].to_vec();
    let n_test = cfg.n_test.min(rest.len() - n_val);
    let test_idx = rest[n_val..n_val + n_test].to_vec();
    let ds = Dataset {
        features,
        labels,
        n_classes: k,
        train_idx,
        val_idx,
        test_idx,
    };
    ds.validate()?;
    Ok((graph, ds))
}
