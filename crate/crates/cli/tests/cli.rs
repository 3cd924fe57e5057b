use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use orthoreg::graphio::write_dataset;
use orthoreg::synth::{csbm, CsbmConfig};
use serde_json::Value;

fn orthoreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orthoreg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(o: &Output) -> Value {
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "stdout: {text}");
    serde_json::from_str(lines[0]).unwrap()
}

fn small_dataset(dir: &Path) {
    let (g, d) = csbm(&CsbmConfig {
        n_nodes: 120,
        n_features: 10,
        n_val: 30,
        n_test: 60,
        train_per_class: 5,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    write_dataset(dir, &g, &d).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const QUICK: &[&str] = &["--hidden", "16", "--epochs", "20", "--trials", "2", "--patience", "0"];

#[test]
fn train_writes_its_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let out = tmp.path().join("run");
    let mut args = vec!["train", "--dataset", p(&data), "--out", p(&out), "--eigens-every", "5"];
    args.extend_from_slice(QUICK);
    let o = orthoreg(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&o);
    assert_eq!(s["trials"], 2);
    assert!(s["mean"].as_f64().unwrap() > 0.0);
    for f in [
        "config.resolved",
        "metrics.jsonl",
        "spectrum.csv",
        "model.ckpt",
        "report.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 20);
    let first: Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for key in ["epoch", "train_loss", "sup_loss", "reg_loss", "val_acc", "test_acc"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    let spectrum = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("epoch,index,ratio,nesum"));
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("epochs = 20"));
}

#[test]
fn reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let mut args = vec!["train", "--dataset", p(&data), "--out", p(&out), "--seed", "4"];
        args.extend_from_slice(QUICK);
        assert_eq!(code(&orthoreg(&args)), 0);
        let mut r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        r.as_object_mut().unwrap().remove("wall_clock_s");
        r["config"]["settings"].as_object_mut().unwrap().remove("out");
        reports.push(r);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!("dataset = \"{}\"\nepochs = 7\nreg = laplacian\n", p(&data)),
    )
    .unwrap();
    let out = tmp.path().join("run");
    let o = orthoreg(&[
        "train",
        "--config",
        p(&cfg),
        "--out",
        p(&out),
        "--hidden",
        "8",
        "--trials",
        "1",
        "--epochs",
        "5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("epochs = 5"), "{resolved}");
    assert!(resolved.contains("reg = laplacian"), "{resolved}");
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let out = tmp.path().join("o");
    let o = orthoreg(&[
        "train",
        "--dataset",
        p(&data),
        "--out",
        p(&out),
        "--learning-rate",
        "0.1",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    let o = orthoreg(&["train", "--dataset", p(&data), "--out", p(&out), "--alpha", "-1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alpha"));

    let o = orthoreg(&["simulate", "--kind", "feature-update", "--tau", "1.5", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("tau"));

    assert_eq!(code(&orthoreg(&["suite", "table9"])), 2);
    assert_eq!(code(&orthoreg(&["train", "--out", p(&out)])), 2);
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    fs::remove_file(data.join("features.csv")).unwrap();
    let o = orthoreg(&["ingest", "--dataset", p(&data), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("features.csv"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let o = orthoreg(&[
        "train",
        "--dataset",
        p(&data),
        "--out",
        p(&tmp.path().join("o")),
        "--reg",
        "laplacian",
        "--lambda",
        "1e308",
        "--trials",
        "1",
        "--hidden",
        "8",
        "--epochs",
        "5",
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn ingest_reports_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let out = tmp.path().join("o");
    let o = orthoreg(&["ingest", "--dataset", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stats: Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["n_nodes"], 120);
    assert_eq!(stats["n_features"], 10);
    assert!(
        stats["isolation"]["inclusive"]["isolated"].as_u64().unwrap()
            >= stats["isolation"]["strict"]["isolated"].as_u64().unwrap()
    );
    assert!(out.join("dataset/features.csv").exists());
}

#[test]
fn simulate_checks_hold() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ["closed-form", "gd", "feature-update"] {
        let out = tmp.path().join(kind);
        let o = orthoreg(&["simulate", "--kind", kind, "--out", p(&out), "--steps", "100"]);
        assert_eq!(code(&o), 0, "{kind}: {}", stderr(&o));
        let s = summary(&o);
        let verdict: Value = serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
        assert_eq!(s["monotone_ratio_ok"], verdict["monotone_ratio_ok"]);
        assert!(out.join("dynamics.csv").exists());
        if kind == "feature-update" {
            assert!(verdict["final_nesum"].as_f64().unwrap() < verdict["initial_nesum"].as_f64().unwrap());
        } else {
            assert_eq!(verdict["monotone_ratio_ok"], true, "{kind}");
            assert_eq!(verdict["theorem1"]["identity_ok"], true, "{kind}");
        }
    }
}

#[test]
fn suites_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let quick = ["--gcn-epochs", "20", "--sgc-epochs", "20", "--ratios", "0,0.5"];
    for suite in ["table1", "table3", "coldstart", "robustness"] {
        let out = tmp.path().join(suite);
        let mut args = vec!["suite", suite, "--dataset", p(&data), "--out", p(&out)];
        args.extend_from_slice(QUICK);
        args.extend_from_slice(&quick);
        let o = orthoreg(&args);
        assert_eq!(code(&o), 0, "{suite}: {}", stderr(&o));
        summary(&o);
        assert!(out.join(format!("{suite}.csv")).exists());
        assert!(out.join(format!("{suite}.json")).exists());
    }
    let table1 = fs::read_to_string(tmp.path().join("table1/table1.csv")).unwrap();
    let names: Vec<&str> = table1.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["mlp", "lap_reg", "sgc", "gcn", "orthoreg"]);
}

#[test]
fn bench_runs_on_a_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("toy");
    small_dataset(&data);
    let out = tmp.path().join("b");
    let o = orthoreg(&[
        "bench",
        "--dataset",
        p(&data),
        "--out",
        p(&out),
        "--depths",
        "2,3",
        "--batch",
        "8",
        "--reps",
        "2",
        "--bench-hidden",
        "16",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(summary(&o)["ratios"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.starts_with("depth,mlp_s,gcn_s,ratio,receptive_field"));
}
