//! Graph and node-data containers, normalized propagation operators, and
//! the graph transformations used by the experiments (isolation, masking).

mod load;
mod transform;

pub use load::{load_dataset, load_edge_list, load_edge_list_with_stats, write_dataset, EdgeListStats};
pub use transform::{homophily_ratio, mask_edges, select_isolated, IsolationResult};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::{CsrMatrix, DenseMatrix};

/// Undirected, unweighted graph in canonical CSR form. Both arcs of every
/// edge are stored; self-loops are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    adjacency: CsrMatrix,
    degrees: Vec<f64>,
}

impl SparseGraph {
    /// Builds from an undirected edge list. Edges are symmetrized and
    /// deduplicated and self-loops are dropped.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut arcs = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::shape(format!("edge ({u},{v}) references a node >= {n_nodes}")));
            }
            if u != v {
                arcs.push((u, v));
                arcs.push((v, u));
            }
        }
        arcs.sort_unstable();
        arcs.dedup();
        let trip: Vec<(usize, usize, f64)> = arcs.into_iter().map(|(u, v)| (u, v, 1.0)).collect();
        let adjacency = CsrMatrix::from_triplets(n_nodes, n_nodes, &trip)?;
        Ok(Self::from_adjacency_unchecked(adjacency))
    }

    fn from_adjacency_unchecked(adjacency: CsrMatrix) -> Self {
        let degrees = (0..adjacency.n_rows())
            .map(|r| adjacency.row(r).0.len() as f64)
            .collect();
        Self { adjacency, degrees }
    }

    /// Wraps an existing CSR adjacency after checking symmetry and the
    /// absence of self-loops.
    pub fn from_adjacency(adjacency: CsrMatrix) -> Result<Self> {
        if adjacency.n_rows() != adjacency.n_cols() {
            return Err(Error::shape("adjacency must be square"));
        }
        let g = Self::from_adjacency_unchecked(adjacency);
        if !g.is_symmetric() {
            return Err(Error::shape("adjacency is not symmetric"));
        }
        if (0..g.n_nodes()).any(|i| g.neighbors(i).binary_search(&i).is_ok()) {
            return Err(Error::shape("adjacency contains self-loops"));
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }

    /// Number of stored (directed) arcs, twice the undirected edge count.
    pub fn n_arcs(&self) -> usize {
        self.adjacency.nnz()
    }

    pub fn n_edges(&self) -> usize {
        self.n_arcs() / 2
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i] as usize
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn row_offsets(&self) -> &[usize] {
        self.adjacency.row_offsets()
    }

    pub fn col_indices(&self) -> &[usize] {
        self.adjacency.col_indices()
    }

    /// Undirected edges as `(i, j)` with `i < j`, in CSR order.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for i in 0..self.n_nodes() {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n_nodes()).all(|i| {
            self.neighbors(i)
                .iter()
                .all(|&j| self.neighbors(j).binary_search(&i).is_ok())
        })
    }

    /// Subgraph with every arc touching `removed` deleted; node ids kept.
    pub fn without_nodes(&self, removed: &[usize]) -> Self {
        let removed: HashSet<usize> = removed.iter().copied().collect();
        let edges: Vec<(usize, usize)> = self
            .undirected_edges()
            .into_iter()
            .filter(|(u, v)| !removed.contains(u) && !removed.contains(v))
            .collect();
        Self::from_edges(self.n_nodes(), &edges).expect("edges of an existing graph are in range")
    }

    /// Number of connected components (isolated nodes count individually).
    pub fn n_components(&self) -> usize {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }
}

/// Which normalization a [`NormalizedOperator`] realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `D^{-1/2} A D^{-1/2}`
    Sym,
    /// `A D^{-1}` (column-stochastic over nodes with degree > 0)
    RandomWalk,
    /// `I - D^{-1/2} A D^{-1/2}`
    Laplacian,
    /// `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}`, the propagation used by GCN/SGC.
    SymSelfLoops,
}

/// Sparse propagation operator together with its transpose.
#[derive(Debug, Clone)]
pub struct NormalizedOperator {
    kind: NormKind,
    matrix: CsrMatrix,
    transposed: CsrMatrix,
}

impl NormalizedOperator {
    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn transposed(&self) -> &CsrMatrix {
        &self.transposed
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.matrix.to_dense()
    }
}

/// Builds the requested operator. Degree-zero nodes get all-zero rows and
/// columns in the adjacency-type kinds and an identity row in the Laplacian.
pub fn normalize(g: &SparseGraph, kind: NormKind) -> NormalizedOperator {
    let n = g.n_nodes();
    let deg = g.degrees();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let adj = g.adjacency();
    let matrix = match kind {
        NormKind::Sym => {
            let mut vals = Vec::with_capacity(adj.nnz());
            for i in 0..n {
                for &j in adj.row(i).0 {
                    vals.push(inv_sqrt[i] * inv_sqrt[j]);
                }
            }
            adj.with_values(vals)
        }
        NormKind::RandomWalk => {
            let mut vals = Vec::with_capacity(adj.nnz());
            for i in 0..n {
                for &j in adj.row(i).0 {
                    vals.push(1.0 / deg[j]);
                }
            }
            adj.with_values(vals)
        }
        NormKind::Laplacian => {
            let mut trip = Vec::with_capacity(adj.nnz() + n);
            for i in 0..n {
                trip.push((i, i, 1.0));
                for &j in adj.row(i).0 {
                    trip.push((i, j, -inv_sqrt[i] * inv_sqrt[j]));
                }
            }
            CsrMatrix::from_triplets(n, n, &trip).expect("indices in range")
        }
        NormKind::SymSelfLoops => {
            let loop_inv: Vec<f64> = deg.iter().map(|&d| 1.0 / (d + 1.0).sqrt()).collect();
            let mut trip = Vec::with_capacity(adj.nnz() + n);
            for i in 0..n {
                trip.push((i, i, loop_inv[i] * loop_inv[i]));
                for &j in adj.row(i).0 {
                    trip.push((i, j, loop_inv[i] * loop_inv[j]));
                }
            }
            CsrMatrix::from_triplets(n, n, &trip).expect("indices in range")
        }
    };
    let transposed = matrix.transpose();
    NormalizedOperator {
        kind,
        matrix,
        transposed,
    }
}

/// Node features, labels and the train/val/test partition.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: DenseMatrix,
    /// `-1` marks an unlabeled node.
    pub labels: Vec<i64>,
    pub n_classes: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl Dataset {
    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Checks shape consistency, disjointness of the splits and that every
    /// training node carries a valid label.
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.rows() != n {
            return Err(Error::shape(format!(
                "features have {} rows but there are {n} labels",
                self.features.rows()
            )));
        }
        let mut owner = vec![None::<&str>; n];
        for (name, idx) in [
            ("train", &self.train_idx),
            ("val", &self.val_idx),
            ("test", &self.test_idx),
        ] {
            for &i in idx.iter() {
                if i >= n {
                    return Err(Error::shape(format!("{name} index {i} out of range (N = {n})")));
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::shape(format!(
                        "node {i} appears in both {prev} and {name} splits"
                    )));
                }
                owner[i] = Some(name);
            }
        }
        for &i in &self.train_idx {
            let y = self.labels[i];
            if y < 0 || y as usize >= self.n_classes {
                return Err(Error::shape(format!(
                    "train node {i} has label {y} outside [0, {})",
                    self.n_classes
                )));
            }
        }
        Ok(())
    }

    /// Copy with features scaled so each non-zero row sums to one.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        for r in 0..out.features.rows() {
            let row = out.features.row_mut(r);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        out
    }

    /// Public-split style training set: the first `per_class` nodes of each
    /// class in `candidates` order.
    pub fn per_class_prefix(&self, candidates: &[usize], per_class: usize) -> Vec<usize> {
        let mut taken = vec![0usize; self.n_classes];
        let mut out = Vec::new();
        for &i in candidates {
            let y = self.labels[i];
            if y >= 0 && taken[y as usize] < per_class {
                taken[y as usize] += 1;
                out.push(i);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> SparseGraph {
        let edges: Vec<_> = (1..=leaves).map(|l| (0, l)).collect();
        SparseGraph::from_edges(leaves + 1, &edges).unwrap()
    }

    #[test]
    fn from_edges_symmetrizes_and_drops_loops() {
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 0), (1, 1), (2, 1)]).unwrap();
        assert_eq!(g.n_arcs(), 4);
        assert_eq!(g.degrees(), &[1.0, 2.0, 1.0]);
        assert!(g.is_symmetric());
    }

    #[test]
    fn sym_single_edge_and_triangle() {
        let g = SparseGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(normalize(&g, NormKind::Sym).matrix().values(), &[1.0, 1.0]);
        let tri = SparseGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let op = normalize(&tri, NormKind::Sym);
        assert_eq!(op.matrix().nnz(), 6);
        assert!(op.matrix().values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn sym_star_center_leaf_value() {
        let op = normalize(&star(3), NormKind::Sym);
        let expected = 1.0 / (3.0f64 * 1.0).sqrt();
        assert!((op.matrix().get(0, 1) - expected).abs() < 1e-15);
        assert!((expected - 0.5774).abs() < 1e-4);
    }

    #[test]
    fn random_walk_columns_sum_to_one() {
        let g = SparseGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        let dense = normalize(&g, NormKind::RandomWalk).to_dense();
        for j in 0..5 {
            let s: f64 = (0..5).map(|i| dense[(i, j)]).sum();
            if g.degree(j) > 0 {
                assert!((s - 1.0).abs() < 1e-15);
            } else {
                assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn laplacian_rows_and_isolated_identity() {
        let g = SparseGraph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let lap = normalize(&g, NormKind::Laplacian);
        let sym = normalize(&g, NormKind::Sym);
        let ones = DenseMatrix::from_vec(4, 1, vec![1.0; 4]).unwrap();
        let l1 = lap.matrix().spmm(&ones).unwrap();
        let sums = sym.matrix().row_sums();
        for i in 0..4 {
            assert!((l1[(i, 0)] - (1.0 - sums[i])).abs() < 1e-15);
        }
        // Node 3 is isolated.
        assert_eq!(lap.matrix().row(3), (&[3usize][..], &[1.0][..]));
        assert_eq!(sym.matrix().row(3).0.len(), 0);
    }

    #[test]
    fn dataset_validation_catches_overlap() {
        let ds = Dataset {
            features: DenseMatrix::zeros(4, 2),
            labels: vec![0, 1, 0, 1],
            n_classes: 2,
            train_idx: vec![0, 1],
            val_idx: vec![2],
            test_idx: vec![1, 3],
        };
        assert!(matches!(ds.validate(), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn components_and_node_removal() {
        let g = SparseGraph::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        assert_eq!(g.n_components(), 2);
        let r = g.without_nodes(&[1]);
        assert_eq!(r.n_edges(), 1);
        assert_eq!(r.n_components(), 4);
    }
}
