use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

use super::train::TrainHistory;

/// Version tag written into every `report.json`.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Accuracy over independent trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    /// Per-trial accuracy, in trial order.
    pub trials: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub wall_clock_s: f64,
    pub config: Value,
    /// Experiment-specific fields such as tuned hyperparameters.
    #[serde(default)]
    pub extra: Map<String, Value>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RunReport {
    pub fn from_trials(name: impl Into<String>, trials: Vec<f64>, config: Value, wall_clock_s: f64) -> Self {
        let (mean, std) = mean_std(&trials);
        Self {
            name: name.into(),
            trials,
            mean,
            std,
            wall_clock_s,
            config,
            extra: Map::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut()
            .expect("report is an object")
            .insert("schema_version".into(), json!(REPORT_SCHEMA_VERSION));
        v
    }

    /// `report.json`, pretty-printed.
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::Io(e.into()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Runs `trial(t, seed + t)` for every trial in parallel and reports the
/// returned accuracies in trial order.
pub fn run_trials<F>(name: &str, n_trials: usize, seed: u64, config: Value, trial: F) -> Result<RunReport>
where
    F: Fn(usize, u64) -> Result<f64> + Sync,
{
    if n_trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    let start = Instant::now();
    let accs = (0..n_trials)
        .into_par_iter()
        .map(|t| trial(t, seed.wrapping_add(t as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let report = RunReport::from_trials(name, accs, config, start.elapsed().as_secs_f64());
    log::info!(
        "{}: {:.4} ± {:.4} over {} trials ({:.1}s)",
        report.name,
        report.mean,
        report.std,
        n_trials,
        report.wall_clock_s
    );
    Ok(report)
}

/// One JSON object per epoch with the loss terms and accuracies.
pub fn write_metrics_jsonl(history: &TrainHistory, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in &history.records {
        let line = json!({
            "epoch": r.epoch,
            "train_loss": r.train_loss,
            "sup_loss": r.sup_loss,
            "reg_loss": r.reg_loss,
            "val_acc": r.val_acc,
            "test_acc": r.test_acc,
        });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// `epoch,index,ratio,nesum` where `ratio = λ_index/λ_1`.
pub fn write_spectrum_csv(history: &TrainHistory, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,index,ratio,nesum")?;
    for e in history.records.iter().filter_map(|r| r.eigen.as_ref()) {
        for (i, r) in e.normalized().iter().enumerate() {
            writeln!(w, "{},{},{},{}", e.epoch, i + 1, r, e.nesum)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows of `name,mean,std,trials...` for a set of reports.
pub fn write_reports_csv(reports: &[RunReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let max_trials = reports.iter().map(|r| r.trials.len()).max().unwrap_or(0);
    write!(w, "name,mean,std")?;
    for t in 0..max_trials {
        write!(w, ",trial_{t}")?;
    }
    writeln!(w)?;
    for r in reports {
        write!(w, "{},{},{}", r.name, r.mean, r.std)?;
        for a in &r.trials {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
