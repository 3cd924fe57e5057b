//! Flat `key = value` settings: built-in defaults, then a config file, then
//! command-line `--key value` pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

const COMMON: &[Key] = &[
    key("out", "out", "output directory; nothing is written elsewhere"),
    key("seed", "0", "base seed; trial t uses seed + t"),
];

const DATA: &[Key] = &[
    key("dataset", "", "dataset directory"),
    key("normalize_features", "true", "scale feature rows to sum to one"),
];

const MODEL: &[Key] = &[
    key("reg", "orthoreg", "none | laplacian | preg | orthoreg | corr_identity"),
    key(
        "preset",
        "auto",
        "auto (from the dataset directory name) | none | cora | citeseer | pubmed",
    ),
    key("alpha", "1e-3", "OrthoReg weight on the diagonal"),
    key("beta", "1e-6", "OrthoReg weight on the off-diagonal"),
    key("T", "2", "OrthoReg neighborhood hops"),
    key("pooling", "average", "average | second_hop"),
    key("center", "true", "center columns before standardizing"),
    key(
        "lambda",
        "1e-3",
        "weight of the laplacian, preg and corr_identity regularizers",
    ),
    key("hidden", "256,512", "encoder widths; the last is the embedding size"),
    key("lr", "0.01", "Adam learning rate"),
    key("dropout", "0.5", "dropout on hidden layers"),
    key("weight_decay", "0", "decoupled weight decay"),
    key("epochs", "500", "training epochs"),
    key(
        "patience",
        "100",
        "early stopping patience on validation accuracy (0 = off)",
    ),
    key("trials", "10", "independent seeds"),
];

const TRAIN_ONLY: &[Key] = &[key(
    "eigens_every",
    "5",
    "record the embedding spectrum every n epochs (first trial)",
)];

const SUITE_ONLY: &[Key] = &[
    key(
        "lap_lambda",
        "1e-3",
        "Laplacian regularization weight for the Lap-Reg row",
    ),
    key(
        "tune",
        "false",
        "pick alpha and beta on the coarse grid by validation accuracy",
    ),
    key("tune_trials", "2", "seeds per grid point when tuning"),
    key("gcn_hidden", "16", "GCN hidden widths"),
    key("gcn_lr", "0.01", "GCN learning rate"),
    key("gcn_dropout", "0.5", "GCN dropout"),
    key("gcn_weight_decay", "5e-4", "GCN first-layer L2 weight"),
    key("gcn_epochs", "200", "GCN epochs"),
    key("sgc_k", "2", "SGC propagation steps"),
    key("sgc_lr", "0.2", "SGC learning rate"),
    key("sgc_weight_decay", "5e-6", "SGC L2 weight"),
    key("sgc_epochs", "100", "SGC epochs"),
    key(
        "percentile",
        "3",
        "cold start: degree percentile defining isolated nodes",
    ),
    key(
        "strict",
        "false",
        "cold start: isolate degree < threshold instead of <=",
    ),
    key("per_class", "20", "cold start: training labels per class"),
    key("ratios", "0,0.2,0.4", "robustness: edge mask ratios"),
];

const BENCH: &[Key] = &[
    key("depths", "2,3,4", "layer counts to time"),
    key("batch", "64", "nodes per inference batch"),
    key("bench_hidden", "256", "hidden width of the timed models"),
    key("reps", "10", "timed repetitions (median reported)"),
    key(
        "synthetic",
        "pubmed",
        "graph shape used when no dataset is given: pubmed | cora",
    ),
];

const INGEST: &[Key] = &[
    key("percentile", "3", "degree percentile for the isolation counts"),
    key("strict", "false", "also report counts under the strict rule"),
];

const SIMULATE: &[Key] = &[
    key("kind", "closed-form", "closed-form | gd | feature-update"),
    key("graph", "sbm", "sbm | ring | path | dataset"),
    key("dataset", "", "dataset directory when graph = dataset"),
    key("n", "40", "nodes of the synthetic graph"),
    key("blocks", "2", "SBM blocks"),
    key("p_in", "0.5", "SBM within-block edge probability"),
    key("p_out", "0.05", "SBM across-block edge probability"),
    key("features", "8", "feature dimension of the random X"),
    key(
        "whiten",
        "true",
        "whiten X (required for the eigenvalue identity check)",
    ),
    key("snapshots", "50", "closed form: snapshots over [0, t_final]"),
    key("t_final", "1", "closed form: final time"),
    key("sign", "1", "closed form: flow exp(sign * P * t)"),
    key("step", "0.001", "gd: step size"),
    key("steps", "200", "gd and feature-update: iterations"),
    key("every", "4", "gd and feature-update: snapshot interval"),
    key("tau", "0.5", "feature-update: smoothing rate in [0, 1]"),
    key("dim", "8", "feature-update: embedding columns"),
    key("tol", "1e-9", "relative tolerance of the ratio checks"),
    key("identity_tol", "1e-8", "tolerance of the eigenvalue identity check"),
];

/// Known keys of a command.
pub fn keys_for(command: &str) -> Vec<&'static Key> {
    let groups: &[&[Key]] = match command {
        "ingest" => &[COMMON, DATA, INGEST],
        "train" => &[COMMON, DATA, MODEL, TRAIN_ONLY],
        "suite" => &[COMMON, DATA, MODEL, SUITE_ONLY, BENCH],
        "bench" => &[COMMON, DATA, BENCH],
        "simulate" => &[COMMON, SIMULATE],
        _ => &[],
    };
    let mut seen = BTreeSet::new();
    groups
        .iter()
        .flat_map(|g| g.iter())
        .filter(|k| seen.insert(k.name))
        .collect()
}

pub fn help_text(command: &str) -> String {
    let mut out = String::from("Settings (config file `key = value`, or `--key value`):\n");
    for k in keys_for(command) {
        out.push_str(&format!("  {:<20} {} [default: {}]\n", k.name, k.help, k.default));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Settings {
    command: String,
    values: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

fn normalize_key(raw: &str) -> String {
    raw.trim().replace('-', "_")
}

impl Settings {
    /// Defaults, overridden by `config` (if any) and then by `args`.
    pub fn resolve(command: &str, args: &[String]) -> Result<Self, CliError> {
        let mut s = Self {
            command: command.to_string(),
            values: keys_for(command)
                .into_iter()
                .map(|k| (k.name.to_string(), k.default.to_string()))
                .collect(),
            explicit: BTreeSet::new(),
        };
        let pairs = parse_args(args)?;
        if let Some((_, path)) = pairs.iter().find(|(k, _)| k == "config") {
            s.load_file(Path::new(path))?;
        }
        for (k, v) in pairs {
            if k != "config" {
                s.set(&k, &v)?;
            }
        }
        Ok(s)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = normalize_key(key);
        if !self.values.contains_key(&key) {
            return Err(CliError::Config(format!(
                "unknown key `{key}` for `{}`; run with --help for the list",
                self.command
            )));
        }
        self.values.insert(key.clone(), value.trim().to_string());
        self.explicit.insert(key);
        Ok(())
    }

    fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{}:{}: expected `key = value`", path.display(), n + 1)))?;
            let v = v.trim();
            let v = v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v);
            self.set(k, v)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not a setting of `{}`", self.command))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| CliError::Config(format!("bad value {raw:?} for `{key}`: {e}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|e| CliError::Config(format!("bad entry {t:?} in `{key}`: {e}")))
            })
            .collect()
    }

    /// Overrides a value after resolution, e.g. from a preset.
    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Every effective setting, sorted, one `key = value` per line.
    pub fn resolved_text(&self) -> String {
        let mut out = format!("# orthoreg {}\n", self.command);
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.values
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
        )
    }
}

/// `--key value`, `--key=value` or a bare `--flag` (meaning `true`).
fn parse_args(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let Some(body) = args[i].strip_prefix("--") else {
            return Err(CliError::Config(format!("unexpected argument {:?}", args[i])));
        };
        if let Some((k, v)) = body.split_once('=') {
            out.push((normalize_key(k), v.to_string()));
            i += 1;
        } else if i + 1 < args.len() && !args[i + 1].starts_with("--") {
            out.push((normalize_key(body), args[i + 1].clone()));
            i += 2;
        } else {
            out.push((normalize_key(body), "true".to_string()));
            i += 1;
        }
    }
    Ok(out)
}
