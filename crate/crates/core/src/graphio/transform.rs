use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SparseGraph;
use crate::error::{Error, Result};

/// Fraction of arcs whose endpoints share a label.
pub fn homophily_ratio(g: &SparseGraph, labels: &[i64]) -> Result<f64> {
    if g.n_arcs() == 0 {
        return Err(Error::EmptyGraph);
    }
    if labels.len() != g.n_nodes() {
        return Err(Error::shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.n_nodes()
        )));
    }
    let mut same = 0usize;
    for i in 0..g.n_nodes() {
        same += g.neighbors(i).iter().filter(|&&j| labels[i] == labels[j]).count();
    }
    Ok(same as f64 / g.n_arcs() as f64)
}

/// Nodes selected by a degree-percentile threshold, and the graph with
/// every arc touching them removed.
#[derive(Debug, Clone)]
pub struct IsolationResult {
    pub threshold_degree: usize,
    pub isolated: Vec<usize>,
    pub reduced: SparseGraph,
}

/// Marks every node whose degree is `<=` (or `<` when `strict`) the
/// nearest-rank `percentile` of the degree list.
pub fn select_isolated(g: &SparseGraph, percentile: f64, strict: bool) -> IsolationResult {
    assert!(
        percentile > 0.0 && percentile < 100.0,
        "percentile must lie in (0, 100)"
    );
    let n = g.n_nodes();
    let mut sorted: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    sorted.sort_unstable();
    let rank = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n.max(1));
    let threshold_degree = sorted.get(rank - 1).copied().unwrap_or(0);
    let isolated: Vec<usize> = (0..n)
        .filter(|&i| {
            let d = g.degree(i);
            if strict {
                d < threshold_degree
            } else {
                d <= threshold_degree
            }
        })
        .collect();
    let reduced = g.without_nodes(&isolated);
    IsolationResult {
        threshold_degree,
        isolated,
        reduced,
    }
}

/// Removes `floor(ratio * m)` undirected edges chosen uniformly without
/// replacement.
pub fn mask_edges(g: &SparseGraph, ratio: f64, seed: u64) -> SparseGraph {
    assert!((0.0..=1.0).contains(&ratio), "mask ratio must lie in [0, 1]");
    let mut edges = g.undirected_edges();
    let m = edges.len();
    // The epsilon keeps products like 0.7 * 10 from rounding down.
    let remove = ((ratio * m as f64 + 1e-9).floor() as usize).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let kept = &edges[remove..];
    SparseGraph::from_edges(g.n_nodes(), kept).expect("edges of an existing graph are in range")
}
