//! Text checkpoint format, version 1:
//!
//! ```text
//! orthoreg-checkpoint 1
//! dims F h1 .. D C
//! weight <layer> <rows> <cols>
//! <one row of space-separated values per line>
//! bias <layer> <len>
//! <values on one line>
//! ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a save/load round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::MlpParams;
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

const MAGIC: &str = "orthoreg-checkpoint";
const VERSION: u32 = 1;

fn join(vals: &[f64]) -> String {
    let mut s = String::with_capacity(vals.len() * 20);
    for (k, v) in vals.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        write!(s, "{v:?}").expect("writing to a String");
    }
    s
}

pub fn to_checkpoint_string(params: &MlpParams) -> String {
    let mut out = format!("{MAGIC} {VERSION}\n");
    let dims: Vec<String> = params.dims.iter().map(usize::to_string).collect();
    out.push_str(&format!("dims {}\n", dims.join(" ")));
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        out.push_str(&format!("weight {l} {} {}\n", w.rows(), w.cols()));
        for r in 0..w.rows() {
            out.push_str(&join(w.row(r)));
            out.push('\n');
        }
        out.push_str(&format!("bias {l} {}\n", b.len()));
        out.push_str(&join(b));
        out.push('\n');
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_values(line: Option<&str>, expected: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| bad("unexpected end of file"))?;
    let vals = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad value {t:?}"))))
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != expected {
        return Err(bad(format!("expected {expected} values, found {}", vals.len())));
    }
    Ok(vals)
}

fn header<'a>(line: Option<&'a str>, tag: &str, layer: usize, n: usize) -> Result<Vec<usize>> {
    let line = line.ok_or_else(|| bad("unexpected end of file"))?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(tag) {
        return Err(bad(format!("expected {tag} header, found {line:?}")));
    }
    let nums = toks
        .map(|t| t.parse::<usize>().map_err(|_| bad(format!("bad integer {t:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    if nums.len() != n || nums[0] != layer {
        return Err(bad(format!("malformed {tag} header {line:?}")));
    }
    Ok(nums)
}

pub fn from_checkpoint_str(text: &str) -> Result<MlpParams> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| bad("empty checkpoint"))?;
    let mut toks = first.split_whitespace();
    if toks.next() != Some(MAGIC) {
        return Err(bad("not an orthoreg checkpoint"));
    }
    let version: u32 = toks
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing version"))?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dims_line = lines.next().ok_or_else(|| bad("missing dims"))?;
    let dims = dims_line
        .strip_prefix("dims ")
        .ok_or_else(|| bad("missing dims"))?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| bad(format!("bad dim {t:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..dims.len().saturating_sub(1) {
        let h = header(lines.next(), "weight", l, 3)?;
        let (rows, cols) = (h[1], h[2]);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(parse_values(lines.next(), cols)?);
        }
        weights.push(DenseMatrix::from_vec(rows, cols, data)?);
        let h = header(lines.next(), "bias", l, 2)?;
        biases.push(parse_values(lines.next(), h[1])?);
    }
    let params = MlpParams { dims, weights, biases };
    params.check().map_err(|e| bad(e.to_string()))?;
    Ok(params)
}

pub fn save_checkpoint(params: &MlpParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_checkpoint_string(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    from_checkpoint_str(&text)
}
