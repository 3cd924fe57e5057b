use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use orthoreg::collapse::{
    build_p, closed_form_trajectory, feature_space_trajectory, gd_linear_trajectory, largest_gap_split,
    random_orthogonal, verify_lemma1, verify_theorem1, whiten, write_dynamics_csv, DynamicsRun,
};
use orthoreg::eval::{
    ablation_suite, coarse_grid, coldstart_experiment, coldstart_gcn, coldstart_split, gcn_report, inference_benchmark,
    mlp_report, orthoreg_preset, robustness_sweep, sgc_report, train as train_mlp, tune_orthoreg, write_metrics_jsonl,
    write_reports_csv, write_spectrum_csv, BenchConfig, BenchRow, GcnConfig, RunReport, SgcConfig, TrainConfig,
};
use orthoreg::graphio::{
    homophily_ratio, load_dataset, normalize, select_isolated, write_dataset, Dataset, NormKind, SparseGraph,
};
use orthoreg::net::save_checkpoint;
use orthoreg::reg::{OrthoRegParams, PoolingMode, RegularizerSpec};
use orthoreg::synth::{path, random_graph, ring, sbm};
use orthoreg::tensor::{sym_eigvals, DenseMatrix};

use crate::settings::Settings;
use crate::{CliError, SuiteName};

type CliResult<T> = Result<T, CliError>;

fn prepare_out(s: &Settings) -> CliResult<PathBuf> {
    let out = PathBuf::from(s.raw("out"));
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.resolved"), s.resolved_text())?;
    Ok(out)
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).expect("json values serialize");
    fs::write(path, text + "\n")?;
    Ok(())
}

fn dataset_dir(s: &Settings) -> CliResult<PathBuf> {
    let raw = s.raw("dataset");
    if raw.is_empty() {
        return Err(CliError::Config("`dataset` is required".into()));
    }
    Ok(PathBuf::from(raw))
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

fn load(s: &Settings) -> CliResult<(SparseGraph, Dataset)> {
    let dir = dataset_dir(s)?;
    let (g, d) = load_dataset(&dir)?;
    log::info!(
        "loaded {}: {} nodes, {} edges, {} features, {} classes",
        dir.display(),
        g.n_nodes(),
        g.n_edges(),
        d.n_features(),
        d.n_classes
    );
    let d = if s.get::<bool>("normalize_features")? {
        d.row_normalized()
    } else {
        d
    };
    Ok((g, d))
}

fn non_negative(s: &Settings, key: &str) -> CliResult<f64> {
    let v: f64 = s.get(key)?;
    if !(v >= 0.0) {
        return Err(CliError::Config(format!("`{key}` must be non-negative, got {v}")));
    }
    Ok(v)
}

/// Fills `alpha` and `beta` from the preset unless they were given.
fn apply_preset(s: &mut Settings) -> CliResult<()> {
    let preset = s.raw("preset").to_ascii_lowercase();
    let params = match preset.as_str() {
        "none" => None,
        "auto" => {
            let name = dataset_name(Path::new(s.raw("dataset")));
            orthoreg_preset(&name)
        }
        other => Some(orthoreg_preset(other).ok_or_else(|| CliError::Config(format!("unknown preset {other:?}")))?),
    };
    if let Some(p) = params {
        if !s.is_explicit("alpha") && !s.is_explicit("beta") {
            s.put("alpha", p.alpha);
            s.put("beta", p.beta);
        }
    }
    Ok(())
}

fn orthoreg_params(s: &Settings) -> CliResult<OrthoRegParams> {
    let pooling = match s.raw("pooling") {
        "average" => PoolingMode::Average,
        "second_hop" => PoolingMode::SecondHop,
        other => return Err(CliError::Config(format!("unknown pooling {other:?}"))),
    };
    Ok(OrthoRegParams {
        alpha: non_negative(s, "alpha")?,
        beta: non_negative(s, "beta")?,
        t: s.get("T")?,
        pooling,
        center: s.get("center")?,
    })
}

fn train_config(s: &Settings) -> CliResult<TrainConfig> {
    let lambda = non_negative(s, "lambda")?;
    let ortho = orthoreg_params(s)?;
    let regularizer = match s.raw("reg") {
        "none" => RegularizerSpec::None,
        "laplacian" => RegularizerSpec::Laplacian { lambda },
        "preg" => RegularizerSpec::PReg { lambda },
        "orthoreg" => RegularizerSpec::OrthoReg(ortho),
        "corr_identity" => RegularizerSpec::CorrIdentity {
            lambda,
            center: ortho.center,
        },
        other => return Err(CliError::Config(format!("unknown regularizer {other:?}"))),
    };
    let cfg = TrainConfig {
        regularizer,
        hidden: s.list("hidden")?,
        lr: s.get("lr")?,
        dropout_p: s.get("dropout")?,
        weight_decay: s.get("weight_decay")?,
        epochs: s.get("epochs")?,
        seed: s.get("seed")?,
        eigens_every: 0,
        early_stop_patience: s.get("patience")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn trials(s: &Settings) -> CliResult<usize> {
    let n: usize = s.get("trials")?;
    if n == 0 {
        return Err(CliError::Config("`trials` must be at least 1".into()));
    }
    Ok(n)
}

fn gcn_config(s: &Settings) -> CliResult<GcnConfig> {
    let cfg = GcnConfig {
        hidden: s.list("gcn_hidden")?,
        lr: s.get("gcn_lr")?,
        dropout_p: s.get("gcn_dropout")?,
        weight_decay: s.get("gcn_weight_decay")?,
        epochs: s.get("gcn_epochs")?,
        seed: s.get("seed")?,
        early_stop_patience: 0,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn sgc_config(s: &Settings) -> CliResult<SgcConfig> {
    Ok(SgcConfig {
        k: s.get("sgc_k")?,
        lr: s.get("sgc_lr")?,
        weight_decay: s.get("sgc_weight_decay")?,
        epochs: s.get("sgc_epochs")?,
        seed: s.get("seed")?,
    })
}

fn reports_json(reports: &[RunReport]) -> Value {
    Value::Array(reports.iter().map(RunReport::to_json).collect())
}

pub fn ingest(args: &[String]) -> CliResult<Value> {
    let s = Settings::resolve("ingest", args)?;
    let percentile: f64 = s.get("percentile")?;
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(CliError::Config(format!(
            "`percentile` must lie in (0, 100), got {percentile}"
        )));
    }
    let dir = dataset_dir(&s)?;
    let (g, d) = load_dataset(&dir)?;
    let out = prepare_out(&s)?;
    write_dataset(out.join("dataset"), &g, &d)?;
    let inclusive = select_isolated(&g, percentile, false);
    let strict = select_isolated(&g, percentile, true);
    let stats = json!({
        "dataset": dir.display().to_string(),
        "n_nodes": g.n_nodes(),
        "n_edges": g.n_edges(),
        "n_arcs": g.n_arcs(),
        "n_features": d.n_features(),
        "n_classes": d.n_classes,
        "n_train": d.train_idx.len(),
        "n_val": d.val_idx.len(),
        "n_test": d.test_idx.len(),
        "n_components": g.n_components(),
        "homophily": homophily_ratio(&g, &d.labels).ok(),
        "isolation": {
            "percentile": percentile,
            "threshold_degree": inclusive.threshold_degree,
            "inclusive": { "isolated": inclusive.isolated.len(), "arcs_left": inclusive.reduced.n_arcs() },
            "strict": { "isolated": strict.isolated.len(), "arcs_left": strict.reduced.n_arcs() },
        },
    });
    write_json(&out.join("stats.json"), &stats)?;
    Ok(json!({ "command": "ingest", "out": out.display().to_string(), "n_nodes": g.n_nodes(), "n_edges": g.n_edges() }))
}

pub fn train(args: &[String]) -> CliResult<Value> {
    let mut s = Settings::resolve("train", args)?;
    apply_preset(&mut s)?;
    let cfg = train_config(&s)?;
    let n_trials = trials(&s)?;
    let eigens_every: usize = s.get("eigens_every")?;
    let (g, d) = load(&s)?;
    let out = prepare_out(&s)?;

    let start = Instant::now();
    let runs = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let trial_cfg = TrainConfig {
                eigens_every: if t == 0 { eigens_every } else { 0 },
                ..cfg.with_seed(cfg.seed.wrapping_add(t as u64))
            };
            train_mlp(&trial_cfg, &g, &d)
        })
        .collect::<orthoreg::Result<Vec<_>>>()?;
    let accs: Vec<f64> = runs.iter().map(|(_, h)| h.test_acc).collect();
    let report = RunReport::from_trials(
        cfg.regularizer.name(),
        accs,
        json!({ "settings": s.to_json(), "train": cfg }),
        start.elapsed().as_secs_f64(),
    )
    .with_extra(
        "best_epochs",
        json!(runs.iter().map(|(_, h)| h.best_epoch).collect::<Vec<_>>()),
    );

    let (params, history) = &runs[0];
    write_metrics_jsonl(history, out.join("metrics.jsonl"))?;
    write_spectrum_csv(history, out.join("spectrum.csv"))?;
    save_checkpoint(params, out.join("model.ckpt"))?;
    report.write_json(out.join("report.json"))?;
    Ok(json!({
        "command": "train",
        "out": out.display().to_string(),
        "mean": report.mean,
        "std": report.std,
        "trials": n_trials,
    }))
}

fn simulation_graph(s: &Settings) -> CliResult<(SparseGraph, Option<DenseMatrix>)> {
    let n: usize = s.get("n")?;
    let seed: u64 = s.get("seed")?;
    let g = match s.raw("graph") {
        "sbm" => {
            let (p_in, p_out): (f64, f64) = (s.get("p_in")?, s.get("p_out")?);
            if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
                return Err(CliError::Config("SBM probabilities must lie in [0, 1]".into()));
            }
            sbm(n, s.get("blocks")?, p_in, p_out, seed)
        }
        "ring" => ring(n),
        "path" => path(n),
        "dataset" => {
            let (g, d) = load_dataset(dataset_dir(s)?)?;
            return Ok((g, Some(d.features)));
        }
        other => return Err(CliError::Config(format!("unknown graph {other:?}"))),
    };
    Ok((g, None))
}

fn nesum_at(run: &DynamicsRun, first: bool) -> f64 {
    let snap = if first {
        run.snapshots.first()
    } else {
        run.snapshots.last()
    };
    snap.map_or(f64::NAN, |s| s.eigen.nesum)
}

pub fn simulate(args: &[String]) -> CliResult<Value> {
    let s = Settings::resolve("simulate", args)?;
    let kind = s.raw("kind").to_string();
    let tau: f64 = s.get("tau")?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Config(format!("`tau` must lie in [0, 1], got {tau}")));
    }
    if !["closed-form", "gd", "feature-update"].contains(&kind.as_str()) {
        return Err(CliError::Config(format!(
            "unknown kind {kind:?}; expected closed-form, gd or feature-update"
        )));
    }
    let seed: u64 = s.get("seed")?;
    let tol: f64 = s.get("tol")?;
    let (g, data_x) = simulation_graph(&s)?;
    let out = prepare_out(&s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));

    let mut verdict = json!({ "kind": kind, "n_nodes": g.n_nodes(), "n_edges": g.n_edges() });
    let run = if kind == "feature-update" {
        let dim: usize = s.get("dim")?;
        let h0 = DenseMatrix::random_normal(g.n_nodes(), dim, &mut rng);
        let a_sym = normalize(&g, NormKind::Sym);
        let run = feature_space_trajectory(&h0, &a_sym, tau, s.get("steps")?, s.get("every")?)?;
        let mut growth: Vec<f64> = sym_eigvals(&a_sym.to_dense())?
            .into_iter()
            .map(|mu| (1.0 - 2.0 * tau + 2.0 * tau * mu).abs())
            .collect();
        growth.sort_by(|a, b| b.total_cmp(a));
        let ratios = verify_lemma1(&run, largest_gap_split(&growth), tol);
        merge(&mut verdict, serde_json::to_value(&ratios).expect("verdict serializes"));
        verdict["initial_nesum"] = json!(nesum_at(&run, true));
        verdict["final_nesum"] = json!(nesum_at(&run, false));
        run
    } else {
        let x = match data_x {
            Some(x) => x,
            None => DenseMatrix::random_normal(g.n_nodes(), s.get("features")?, &mut rng),
        };
        let x = if s.get::<bool>("whiten")? { whiten(&x)? } else { x };
        let lap = normalize(&g, NormKind::Laplacian);
        let p = build_p(&x, &lap)?;
        let lambdas = sym_eigvals(&p)?;
        let d_split = largest_gap_split(&lambdas);
        let w0 = random_orthogonal(x.cols(), &mut rng);
        let run = if kind == "closed-form" {
            let snapshots: usize = s.get("snapshots")?;
            let t_final: f64 = s.get("t_final")?;
            if snapshots < 2 || !(t_final > 0.0) {
                return Err(CliError::Config(
                    "closed form needs snapshots >= 2 and t_final > 0".into(),
                ));
            }
            let times: Vec<f64> = (0..snapshots)
                .map(|k| t_final * k as f64 / (snapshots - 1) as f64)
                .collect();
            let sign: f64 = s.get("sign")?;
            let run = closed_form_trajectory(&p, &w0, &times, sign)?;
            if d_split < lambdas.len() {
                verdict["analytic_across_gap"] =
                    json!((-(sign * (lambdas[d_split - 1] - lambdas[d_split]) * t_final)).exp());
            }
            run
        } else {
            gd_linear_trajectory(&x, &lap, &w0, s.get("step")?, s.get("steps")?, s.get("every")?)?
        };
        let ratios = verify_lemma1(&run, d_split, tol);
        merge(&mut verdict, serde_json::to_value(&ratios).expect("verdict serializes"));
        verdict["p_eigenvalues"] = json!(lambdas);
        if s.get::<bool>("whiten")? {
            let th = verify_theorem1(&x, &run, d_split, s.get("identity_tol")?)?;
            verdict["theorem1"] = serde_json::to_value(&th).expect("verdict serializes");
        }
        run
    };
    write_dynamics_csv(&run, out.join("dynamics.csv"))?;
    write_json(&out.join("verdict.json"), &verdict)?;
    Ok(json!({
        "command": "simulate",
        "out": out.display().to_string(),
        "monotone_ratio_ok": verdict["monotone_ratio_ok"],
        "identity_ok": verdict["theorem1"]["identity_ok"],
    }))
}

fn merge(into: &mut Value, from: Value) {
    if let (Some(a), Value::Object(b)) = (into.as_object_mut(), from) {
        a.extend(b);
    }
}

fn write_table(out: &Path, stem: &str, reports: &[RunReport], extra: Value) -> CliResult<()> {
    write_reports_csv(reports, out.join(format!("{stem}.csv")))?;
    let mut v = json!({ "suite": stem, "rows": reports_json(reports) });
    merge(&mut v, extra);
    write_json(&out.join(format!("{stem}.json")), &v)
}

fn renamed(mut r: RunReport, name: &str) -> RunReport {
    r.name = name.to_string();
    r
}

pub fn suite(name: SuiteName, args: &[String]) -> CliResult<Value> {
    if let SuiteName::Bench = name {
        return bench_with(Settings::resolve("suite", args)?, "bench");
    }
    let mut s = Settings::resolve("suite", args)?;
    apply_preset(&mut s)?;
    let mut s_ortho = s.clone();
    s_ortho.put("reg", "orthoreg");
    let mut cfg = train_config(&s_ortho)?;
    let n_trials = trials(&s)?;
    let (g, d) = load(&s)?;
    let out = prepare_out(&s)?;

    let summary = match name {
        SuiteName::Table1 => {
            let mut extra = json!({});
            if s.get::<bool>("tune")? {
                let tuned = tune_orthoreg(&cfg, &g, &d, &coarse_grid(&[]), s.get("tune_trials")?)?;
                log::info!("tuned alpha = {}, beta = {}", tuned.alpha, tuned.beta);
                if let RegularizerSpec::OrthoReg(p) = &mut cfg.regularizer {
                    p.alpha = tuned.alpha;
                    p.beta = tuned.beta;
                }
                extra["tuning"] = serde_json::to_value(&tuned).expect("tuning serializes");
            }
            let plain = TrainConfig {
                regularizer: RegularizerSpec::None,
                ..cfg.clone()
            };
            let lap = TrainConfig {
                regularizer: RegularizerSpec::Laplacian {
                    lambda: non_negative(&s, "lap_lambda")?,
                },
                ..cfg.clone()
            };
            let mut ortho = mlp_report("orthoreg", &cfg, &g, &d, n_trials)?;
            if let RegularizerSpec::OrthoReg(p) = cfg.regularizer {
                ortho = ortho
                    .with_extra("alpha", json!(p.alpha))
                    .with_extra("beta", json!(p.beta));
            }
            let rows = vec![
                mlp_report("mlp", &plain, &g, &d, n_trials)?,
                mlp_report("lap_reg", &lap, &g, &d, n_trials)?,
                sgc_report("sgc", &sgc_config(&s)?, &g, &d, n_trials)?,
                gcn_report("gcn", &gcn_config(&s)?, &g, &d, n_trials)?,
                ortho,
            ];
            write_table(&out, "table1", &rows, extra)?;
            rows_summary(&rows)
        }
        SuiteName::Table3 => {
            let rows = ablation_suite(&cfg, &g, &d, n_trials)?;
            write_table(&out, "table3", &rows, json!({}))?;
            rows_summary(&rows)
        }
        SuiteName::Coldstart => {
            let split = coldstart_split(&g, &d, s.get("percentile")?, s.get("strict")?, s.get("per_class")?)?;
            let plain = TrainConfig {
                regularizer: RegularizerSpec::None,
                ..cfg.clone()
            };
            let rows = vec![
                coldstart_experiment("orthoreg", &cfg, &split, &d, n_trials)?,
                coldstart_experiment("mlp", &plain, &split, &d, n_trials)?,
                renamed(coldstart_gcn("gcn", &gcn_config(&s)?, &split, &d, n_trials)?, "gcn"),
            ];
            let extra = json!({
                "threshold_degree": split.threshold_degree,
                "n_isolated": split.isolated.len(),
                "n_isolated_test": split.isolated_test.len(),
                "edges_left": split.graph.n_edges(),
            });
            write_table(&out, "coldstart", &rows, extra)?;
            rows_summary(&rows)
        }
        SuiteName::Robustness => {
            let ratios: Vec<f64> = s.list("ratios")?;
            let sweep = robustness_sweep(&cfg, &gcn_config(&s)?, &g, &d, &ratios, n_trials)?;
            let mut csv = String::from("ratio,model,mean,std,drop\n");
            let base = sweep.iter().find(|r| r.ratio == 0.0);
            for row in &sweep {
                for (model, r, b) in [
                    ("orthoreg", &row.orthoreg, base.map(|b| b.orthoreg.mean)),
                    ("gcn", &row.gcn, base.map(|b| b.gcn.mean)),
                ] {
                    let drop = b.map(|b| (b - r.mean).to_string()).unwrap_or_default();
                    csv.push_str(&format!("{},{model},{},{},{drop}\n", row.ratio, r.mean, r.std));
                }
            }
            fs::write(out.join("robustness.csv"), csv)?;
            write_json(
                &out.join("robustness.json"),
                &json!({ "suite": "robustness", "rows": serde_json::to_value(&sweep).expect("rows serialize") }),
            )?;
            json!(sweep
                .iter()
                .map(|r| json!({ "ratio": r.ratio, "orthoreg": r.orthoreg.mean, "gcn": r.gcn.mean }))
                .collect::<Vec<_>>())
        }
        SuiteName::Bench => unreachable!("handled above"),
    };
    Ok(json!({ "command": "suite", "out": out.display().to_string(), "rows": summary }))
}

fn rows_summary(rows: &[RunReport]) -> Value {
    json!(rows
        .iter()
        .map(|r| json!({ "name": r.name, "mean": r.mean, "std": r.std }))
        .collect::<Vec<_>>())
}

pub fn bench(args: &[String]) -> CliResult<Value> {
    bench_with(Settings::resolve("bench", args)?, "bench")
}

/// Uniform random graph and Gaussian features with a benchmark's published shape.
pub fn synthetic_shape(name: &str, seed: u64) -> CliResult<(SparseGraph, DenseMatrix, usize)> {
    let (n, m, f, c) = match name {
        "pubmed" => (19_717, 44_324, 500, 3),
        "cora" => (2_708, 5_278, 1_433, 7),
        other => return Err(CliError::Config(format!("unknown synthetic shape {other:?}"))),
    };
    let g = random_graph(n, m, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    Ok((g, DenseMatrix::random_normal(n, f, &mut rng), c))
}

fn bench_with(s: Settings, stem: &str) -> CliResult<Value> {
    let seed: u64 = s.get("seed")?;
    let (g, x, classes, source) = if s.raw("dataset").is_empty() {
        let shape = s.raw("synthetic").to_string();
        let (g, x, c) = synthetic_shape(&shape, seed)?;
        (g, x, c, format!("synthetic:{shape}"))
    } else {
        let (g, d) = load(&s)?;
        (g, d.features, d.n_classes, s.raw("dataset").to_string())
    };
    let cfg = BenchConfig {
        depths: s.list("depths")?,
        batch: s.get("batch")?,
        hidden: s.get("bench_hidden")?,
        n_classes: classes,
        reps: s.get("reps")?,
        warmup: 2,
        seed,
    };
    let out = prepare_out(&s)?;
    let rows = inference_benchmark(&g, &x, &cfg)?;
    let mut w = std::io::BufWriter::new(fs::File::create(out.join(format!("{stem}.csv")))?);
    writeln!(w, "depth,mlp_s,gcn_s,ratio,receptive_field")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.depth, r.mlp_s, r.gcn_s, r.ratio, r.receptive_field
        )?;
    }
    w.flush()?;
    write_json(
        &out.join(format!("{stem}.json")),
        &json!({ "suite": stem, "input": source, "config": cfg, "rows": rows }),
    )?;
    Ok(json!({
        "command": "bench",
        "out": out.display().to_string(),
        "input": source,
        "ratios": rows.iter().map(|r: &BenchRow| r.ratio).collect::<Vec<_>>(),
    }))
}
