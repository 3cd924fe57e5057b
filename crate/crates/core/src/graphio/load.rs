//! Plain-text dataset layout: `edges.txt`, `features.csv`, `labels.csv`,
//! `splits/{train,val,test}.txt`, optional `meta.txt` and `node_ids.txt`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Dataset, SparseGraph};
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Counters collected while parsing an edge list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeListStats {
    pub lines: usize,
    pub self_loops_dropped: usize,
    pub header_n_nodes: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// `key=value` pairs from a header comment or a meta file line.
fn key_value(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    Some((k.trim(), v.trim()))
}

struct RawEdges {
    edges: Vec<(usize, usize)>,
    max_id: Option<usize>,
    stats: EdgeListStats,
}

fn parse_edges(path: &Path, id_map: Option<&HashMap<String, usize>>) -> Result<RawEdges> {
    let text = read(path)?;
    let mut edges = Vec::new();
    let mut stats = EdgeListStats::default();
    let mut max_id = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(("n_nodes", v)) = key_value(comment) {
                let n = v
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad n_nodes header value {v:?}")))?;
                stats.header_n_nodes = Some(n);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        stats.lines += 1;
        let mut toks = line.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(parse_err(path, lineno, "expected exactly two node ids"));
        };
        let resolve = |tok: &str| -> Result<usize> {
            match id_map {
                Some(map) => map
                    .get(tok)
                    .copied()
                    .ok_or_else(|| parse_err(path, lineno, format!("node id {tok:?} not in node_ids.txt"))),
                None => tok
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("node id {tok:?} is not a non-negative integer"))),
            }
        };
        let (u, v) = (resolve(a)?, resolve(b)?);
        if u == v {
            stats.self_loops_dropped += 1;
            continue;
        }
        max_id = max_id.max(Some(u.max(v)));
        edges.push((u, v));
    }
    Ok(RawEdges { edges, max_id, stats })
}

/// Loads an edge list. `n_nodes` is `max id + 1` unless a `# n_nodes=N`
/// header line is present.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<SparseGraph> {
    load_edge_list_with_stats(path).map(|(g, _)| g)
}

pub fn load_edge_list_with_stats(path: impl AsRef<Path>) -> Result<(SparseGraph, EdgeListStats)> {
    let path = path.as_ref();
    let raw = parse_edges(path, None)?;
    let Some(max_id) = raw.max_id else {
        return Err(Error::EmptyGraph);
    };
    let n = match raw.stats.header_n_nodes {
        Some(n) if n <= max_id => {
            return Err(parse_err(
                path,
                0,
                format!("n_nodes header {n} but node id {max_id} appears"),
            ));
        }
        Some(n) => n,
        None => max_id + 1,
    };
    if raw.stats.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loops",
            path.display(),
            raw.stats.self_loops_dropped
        );
    }
    Ok((SparseGraph::from_edges(n, &raw.edges)?, raw.stats))
}

fn parse_index_file(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad index {line:?}")))?,
        );
    }
    Ok(out)
}

fn parse_features(path: &Path) -> Result<DenseMatrix> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad feature value {tok:?}")))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("row has {width} values, expected {c}"),
                ));
            }
            _ => {}
        }
        rows += 1;
    }
    DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)
}

fn parse_labels(path: &Path) -> Result<Vec<i64>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad label {line:?}")))?,
        );
    }
    Ok(out)
}

fn parse_meta(path: &Path) -> Result<HashMap<String, usize>> {
    let mut out = HashMap::new();
    if !path.exists() {
        return Ok(out);
    }
    for (lineno, line) in read(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = key_value(line).ok_or_else(|| parse_err(path, lineno + 1, "expected key=value"))?;
        let v = v
            .parse()
            .map_err(|_| parse_err(path, lineno + 1, format!("bad value for {k}")))?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn parse_id_map(path: &Path) -> Result<Option<HashMap<String, usize>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut map = HashMap::new();
    for (lineno, line) in read(path)?.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        let next = map.len();
        if map.insert(id.to_string(), next).is_some() {
            return Err(parse_err(path, lineno + 1, format!("duplicate node id {id:?}")));
        }
    }
    Ok(Some(map))
}

/// Loads a dataset directory. `node_ids.txt`, when present, lists the
/// original id of node `k` on line `k` and `edges.txt` is written in those ids.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(SparseGraph, Dataset)> {
    let dir = dir.as_ref();
    let p = |name: &str| -> PathBuf { dir.join(name) };
    let meta = parse_meta(&p("meta.txt"))?;
    let id_map = parse_id_map(&p("node_ids.txt"))?;
    let features = parse_features(&p("features.csv"))?;
    let labels = parse_labels(&p("labels.csv"))?;
    let splits = dir.join("splits");
    let train_idx = parse_index_file(&splits.join("train.txt"))?;
    let val_idx = parse_index_file(&splits.join("val.txt"))?;
    let test_idx = parse_index_file(&splits.join("test.txt"))?;

    let n = meta.get("n_nodes").copied().unwrap_or(labels.len());
    if labels.len() != n {
        return Err(Error::shape(format!(
            "labels.csv has {} rows, expected {n}",
            labels.len()
        )));
    }
    if features.rows() != n {
        return Err(Error::shape(format!(
            "features.csv has {} rows, expected {n}",
            features.rows()
        )));
    }
    if let Some(map) = &id_map {
        if map.len() != n {
            return Err(Error::shape(format!(
                "node_ids.txt lists {} ids, expected {n}",
                map.len()
            )));
        }
    }
    let n_classes = match meta.get("n_classes") {
        Some(&c) => c,
        None => labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize),
    };

    let edge_path = p("edges.txt");
    let raw = parse_edges(&edge_path, id_map.as_ref())?;
    if let Some(max_id) = raw.max_id {
        if max_id >= n {
            return Err(Error::shape(format!("edges.txt references node {max_id} but N = {n}")));
        }
    }
    if raw.stats.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loops",
            edge_path.display(),
            raw.stats.self_loops_dropped
        );
    }
    let graph = SparseGraph::from_edges(n, &raw.edges)?;
    let ds = Dataset {
        features,
        labels,
        n_classes,
        train_idx,
        val_idx,
        test_idx,
    };
    ds.validate()?;
    Ok((graph, ds))
}

/// Writes `g` and `ds` in the layout read by [`load_dataset`].
pub fn write_dataset(dir: impl AsRef<Path>, g: &SparseGraph, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("splits"))?;
    let create = |name: &str| -> Result<BufWriter<fs::File>> { Ok(BufWriter::new(fs::File::create(dir.join(name))?)) };

    let mut w = create("edges.txt")?;
    writeln!(w, "# n_nodes={}", g.n_nodes())?;
    for (u, v) in g.undirected_edges() {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()?;

    let mut w = create("features.csv")?;
    for r in 0..ds.features.rows() {
        let line: Vec<String> = ds.features.row(r).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;

    let mut w = create("labels.csv")?;
    for y in &ds.labels {
        writeln!(w, "{y}")?;
    }
    w.flush()?;

    for (name, idx) in [("train", &ds.train_idx), ("val", &ds.val_idx), ("test", &ds.test_idx)] {
        let mut w = create(&format!("splits/{name}.txt"))?;
        for i in idx.iter() {
            writeln!(w, "{i}")?;
        }
        w.flush()?;
    }

    let mut w = create("meta.txt")?;
    writeln!(w, "n_nodes={}", g.n_nodes())?;
    writeln!(w, "n_classes={}", ds.n_classes)?;
    w.flush()?;
    Ok(())
}
