use orthoreg::eval::*;
use orthoreg::graphio::{mask_edges, normalize, Dataset, NormKind, SparseGraph};
use orthoreg::net::MlpParams;
use orthoreg::reg::{OrthoRegParams, RegularizerSpec};
use orthoreg::synth::{csbm, CsbmConfig};
use orthoreg::tensor::DenseMatrix;
use orthoreg::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_problem() -> (SparseGraph, Dataset) {
    csbm(&CsbmConfig {
        n_nodes: 300,
        n_features: 20,
        n_val: 60,
        n_test: 150,
        signal: 1.5,
        seed: 3,
        ..Default::default()
    })
    .unwrap()
}

fn quick_cfg(reg: RegularizerSpec) -> TrainConfig {
    TrainConfig {
        regularizer: reg,
        hidden: vec![32, 16],
        epochs: 60,
        early_stop_patience: 0,
        seed: 5,
        ..Default::default()
    }
}

fn ortho() -> RegularizerSpec {
    RegularizerSpec::OrthoReg(OrthoRegParams {
        alpha: 2e-2,
        beta: 2e-5,
        ..Default::default()
    })
}

#[test]
fn training_is_bit_reproducible() {
    let (g, d) = small_problem();
    let cfg = TrainConfig {
        eigens_every: 20,
        ..quick_cfg(ortho())
    };
    let (p1, h1) = train(&cfg, &g, &d).unwrap();
    let (p2, h2) = train(&cfg, &g, &d).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
    let (_, h3) = train(&cfg.with_seed(6), &g, &d).unwrap();
    assert_ne!(h1.records, h3.records);
}

#[test]
fn history_is_well_formed() {
    let (g, d) = small_problem();
    let cfg = TrainConfig {
        eigens_every: 15,
        ..quick_cfg(ortho())
    };
    let (_, h) = train(&cfg, &g, &d).unwrap();
    assert_eq!(h.records.len(), 60);
    for (k, r) in h.records.iter().enumerate() {
        assert_eq!(r.epoch, k + 1);
        assert!((0.0..=1.0).contains(&r.val_acc) && (0.0..=1.0).contains(&r.test_acc));
        assert!((r.train_loss - r.sup_loss - r.reg_loss).abs() < 1e-12);
        assert_eq!(r.eigen.is_some(), r.epoch % 15 == 0);
    }
    let e = h.eigen_at(60).unwrap();
    assert_eq!(e.eigenvalues.len(), 16);
    assert_eq!(h.last_eigen().unwrap().epoch, 60);
}

#[test]
fn model_selection_uses_validation_only() {
    let (g, d) = small_problem();
    let cfg = quick_cfg(RegularizerSpec::None);
    let (params, h) = train(&cfg, &g, &d).unwrap();
    let best = h
        .records
        .iter()
        .fold(&h.records[0], |b, r| if r.val_acc > b.val_acc { r } else { b });
    assert_eq!(h.best_epoch, best.epoch);
    assert_eq!(h.test_acc, best.test_acc);
    assert_eq!(h.best_val_acc, best.val_acc);
    let direct = evaluate(&params, &d.features, &d.labels, &d.test_idx).unwrap();
    assert_eq!(direct, h.test_acc);

    // Scrambling test labels cannot change what is trained or selected.
    let mut scrambled = d.clone();
    for &i in &d.test_idx {
        scrambled.labels[i] = (scrambled.labels[i] + 1) % d.n_classes as i64;
    }
    let (params2, h2) = train(&cfg, &g, &scrambled).unwrap();
    assert_eq!(params, params2);
    assert_eq!(h.best_epoch, h2.best_epoch);
}

#[test]
fn early_stopping_respects_patience() {
    let (g, d) = small_problem();
    let cfg = TrainConfig {
        epochs: 400,
        early_stop_patience: 10,
        ..quick_cfg(RegularizerSpec::None)
    };
    let (_, h) = train(&cfg, &g, &d).unwrap();
    assert!(h.stopped_early);
    let last = h.records.last().unwrap().epoch;
    assert_eq!(last - h.best_epoch, 10);
}

#[test]
fn evaluate_examples() {
    // One-hot features through identity layers give one-hot logits.
    let c = 4;
    let labels: Vec<i64> = (0..20).map(|i| (i % c) as i64).collect();
    let x = DenseMatrix::from_fn(20, c, |i, k| if labels[i] as usize == k { 1.0 } else { 0.0 });
    let mut params = MlpParams::init(&[c, c, c, c], 0).unwrap();
    for w in &mut params.weights {
        *w = DenseMatrix::identity(c);
    }
    let idx: Vec<usize> = (0..20).collect();
    assert_eq!(evaluate(&params, &x, &labels, &idx).unwrap(), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = DenseMatrix::random_normal(1000, 5, &mut rng);
    let labels: Vec<i64> = (0..1000).map(|_| rng.gen_range(0..3)).collect();
    let params = MlpParams::init(&[5, 8, 4, 3], 1).unwrap();
    let idx: Vec<usize> = (0..1000).collect();
    let acc = evaluate(&params, &x, &labels, &idx).unwrap();
    assert!((0.28..=0.39).contains(&acc), "chance accuracy {acc}");

    assert!(matches!(evaluate(&params, &x, &labels, &[]), Err(Error::EmptyMask)));
}

#[test]
fn trained_model_fits_its_training_set() {
    let (g, d) = small_problem();
    let cfg = TrainConfig {
        dropout_p: 0.0,
        epochs: 150,
        ..quick_cfg(RegularizerSpec::None)
    };
    // Select on the training nodes themselves to check fitting rather than generalization.
    let mut on_train = d.clone();
    on_train.val_idx = d.train_idx.clone();
    on_train.test_idx = Vec::new();
    let (p, h) = train(&cfg, &g, &on_train).unwrap();
    let acc = evaluate(&p, &d.features, &d.labels, &d.train_idx).unwrap();
    assert!(acc >= 0.95, "train accuracy {acc}");
    assert!(h.records.last().unwrap().sup_loss < h.records[0].sup_loss);
}

#[test]
fn invalid_configs_and_divergence() {
    let (g, d) = small_problem();
    let bad = TrainConfig {
        epochs: 0,
        ..quick_cfg(RegularizerSpec::None)
    };
    assert!(matches!(train(&bad, &g, &d), Err(Error::InvalidConfig(_))));
    let bad = quick_cfg(RegularizerSpec::OrthoReg(OrthoRegParams {
        alpha: -1.0,
        ..Default::default()
    }));
    assert!(matches!(train(&bad, &g, &d), Err(Error::InvalidConfig(_))));
    let huge = quick_cfg(RegularizerSpec::Laplacian { lambda: 1e308 });
    assert!(matches!(train(&huge, &g, &d), Err(Error::Divergence { step: 1, .. })));
    let (g2, _) = csbm(&CsbmConfig {
        n_nodes: 30,
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(
        train(&quick_cfg(ortho()), &g2, &d),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn sgc_without_propagation_is_logistic_regression() {
    let (g, d) = small_problem();
    assert_eq!(sgc_propagate(&g, &d.features, 0).unwrap(), d.features);
    // Without edges the self-loop operator is the identity, so any k matches k = 0.
    let empty = SparseGraph::from_edges(d.n_nodes(), &[]).unwrap();
    let k0 = sgc_comparator(
        &SgcConfig {
            k: 0,
            ..Default::default()
        },
        &g,
        &d,
    )
    .unwrap();
    let k2_empty = sgc_comparator(&SgcConfig::default(), &empty, &d).unwrap();
    assert_eq!(k0, k2_empty);
    let k2 = sgc_comparator(&SgcConfig::default(), &g, &d).unwrap();
    assert!(
        k2.test_acc > k0.test_acc,
        "propagation {} vs raw {}",
        k2.test_acc,
        k0.test_acc
    );
}

fn toy_gcn() -> (SparseGraph, DenseMatrix, Vec<i64>) {
    let g = SparseGraph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DenseMatrix::random_normal(6, 4, &mut rng);
    (g, x, vec![0, 1, 2, 0, 1, 2])
}

fn flat(p: &GcnParams) -> Vec<f64> {
    p.weights
        .iter()
        .zip(&p.biases)
        .flat_map(|(w, b)| w.as_slice().iter().chain(b).copied().collect::<Vec<_>>())
        .collect()
}

fn set_flat(p: &mut GcnParams, k: usize, v: f64) {
    let mut k = k;
    for (w, b) in p.weights.iter_mut().zip(p.biases.iter_mut()) {
        let wl = w.as_slice().len();
        if k < wl {
            w.as_mut_slice()[k] = v;
            return;
        }
        k -= wl;
        if k < b.len() {
            b[k] = v;
            return;
        }
        k -= b.len();
    }
    panic!("index out of range");
}

#[test]
fn gcn_gradients_match_finite_differences() {
    let (g, x, labels) = toy_gcn();
    let op = normalize(&g, NormKind::SymSelfLoops);
    let mask = [0, 1, 3, 5];
    for dims in [vec![4, 5, 3], vec![4, 6, 5, 3]] {
        let params = GcnParams::init(&dims, 2).unwrap();
        let (_, grads) = gcn_loss_and_grad(&params, &op, &x, &labels, &mask, 5e-2, 0.0, 0).unwrap();
        let analytic: Vec<f64> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.as_slice().iter().chain(b).copied().collect::<Vec<_>>())
            .collect();
        let base = flat(&params);
        let step = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..base.len() {
            let mut plus = params.clone();
            set_flat(&mut plus, k, base[k] + step);
            let mut minus = params.clone();
            set_flat(&mut minus, k, base[k] - step);
            let lp = gcn_loss_and_grad(&plus, &op, &x, &labels, &mask, 5e-2, 0.0, 0)
                .unwrap()
                .0;
            let lm = gcn_loss_and_grad(&minus, &op, &x, &labels, &mask, 5e-2, 0.0, 0)
                .unwrap()
                .0;
            let fd = (lp - lm) / (2.0 * step);
            num += (fd - analytic[k]).powi(2);
            den += fd * fd;
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-4, "dims {dims:?}: relative error {rel}");
    }
}

#[test]
fn gcn_on_edge_free_graph_is_a_relu_mlp() {
    let (_, x, _) = toy_gcn();
    let empty = SparseGraph::from_edges(6, &[]).unwrap();
    let op = normalize(&empty, NormKind::SymSelfLoops);
    let params = GcnParams::init(&[4, 5, 3], 8).unwrap();
    let logits = gcn_predict(&params, &op, &x).unwrap();
    let mut hidden = x.matmul(&params.weights[0]).unwrap();
    for r in 0..6 {
        for (v, b) in hidden.row_mut(r).iter_mut().zip(&params.biases[0]) {
            *v = (*v + b).max(0.0);
        }
    }
    let mut expected = hidden.matmul(&params.weights[1]).unwrap();
    for r in 0..6 {
        for (v, b) in expected.row_mut(r).iter_mut().zip(&params.biases[1]) {
            *v += b;
        }
    }
    assert!(logits.max_abs_diff(&expected) < 1e-12);
}

#[test]
fn gcn_learns_the_synthetic_graph() {
    let (g, d) = small_problem();
    let (_, fit) = gcn_comparator(&GcnConfig::default(), &g, &d).unwrap();
    let mlp = train(&quick_cfg(RegularizerSpec::None), &g, &d).unwrap().1;
    assert!(
        fit.test_acc > mlp.test_acc,
        "gcn {} vs mlp {}",
        fit.test_acc,
        mlp.test_acc
    );
    assert!(fit.best_epoch >= 1 && fit.best_epoch <= fit.epochs_run);
}

#[test]
fn batched_gcn_matches_full_graph_inference() {
    let (g, d) = small_problem();
    let op = normalize(&g, NormKind::SymSelfLoops);
    for dims in [vec![20, 8, 3], vec![20, 8, 8, 8, 3]] {
        let params = GcnParams::init(&dims, 1).unwrap();
        let full = gcn_predict(&params, &op, &d.features).unwrap();
        let batch = [5, 17, 200, 299];
        let layers = receptive_layers(&g, &batch, dims.len() - 1);
        assert_eq!(layers.last().unwrap(), &batch.to_vec());
        for w in layers.windows(2) {
            assert!(w[1].iter().all(|i| w[0].contains(i)));
        }
        let out = gcn_forward_batch(&params, &op, &d.features, &layers).unwrap();
        assert!(out.max_abs_diff(&full.select_rows(&batch)) < 1e-12);
    }
}

#[test]
fn benchmark_reports_every_depth() {
    let (g, d) = small_problem();
    let cfg = BenchConfig {
        depths: vec![2, 3],
        batch: 16,
        hidden: 16,
        reps: 3,
        warmup: 1,
        ..Default::default()
    };
    let rows = inference_benchmark(&g, &d.features, &cfg).unwrap();
    assert_eq!(rows.iter().map(|r| r.depth).collect::<Vec<_>>(), vec![2, 3]);
    for r in &rows {
        assert!(r.mlp_s > 0.0 && r.gcn_s > 0.0);
        assert!((r.ratio - r.gcn_s / r.mlp_s).abs() < 1e-12);
        assert!(r.receptive_field >= 16);
    }
    assert!(rows[1].receptive_field >= rows[0].receptive_field);
    let bad = BenchConfig { depths: vec![1], ..cfg };
    assert!(matches!(
        inference_benchmark(&g, &d.features, &bad),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn run_trials_orders_results_by_trial() {
    let r = run_trials("t", 6, 100, serde_json::json!({"k": 1}), |t, seed| {
        assert_eq!(seed, 100 + t as u64);
        Ok(t as f64 / 10.0)
    })
    .unwrap();
    assert_eq!(r.trials, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
    assert!((r.mean - 0.25).abs() < 1e-12);
    let expected_std = (r.trials.iter().map(|a| (a - 0.25).powi(2)).sum::<f64>() / 6.0).sqrt();
    assert!((r.std - expected_std).abs() < 1e-12);
    assert!(run_trials("t", 0, 0, serde_json::Value::Null, |_, _| Ok(0.0)).is_err());
    let err = run_trials("t", 3, 0, serde_json::Value::Null, |t, _| {
        if t == 1 {
            Err(Error::EmptyMask)
        } else {
            Ok(1.0)
        }
    });
    assert!(matches!(err, Err(Error::EmptyMask)));
}

#[test]
fn writers_follow_their_schemas() {
    let (g, d) = small_problem();
    let cfg = TrainConfig {
        epochs: 10,
        eigens_every: 5,
        ..quick_cfg(ortho())
    };
    let (_, h) = train(&cfg, &g, &d).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let metrics = dir.path().join("metrics.jsonl");
    write_metrics_jsonl(&h, &metrics).unwrap();
    let text = std::fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    for (k, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["epoch"], k + 1);
        for key in ["sup_loss", "reg_loss", "val_acc", "test_acc"] {
            assert!(v[key].is_number(), "{key} missing");
        }
    }

    let spectrum = dir.path().join("spectrum.csv");
    write_spectrum_csv(&h, &spectrum).unwrap();
    let text = std::fs::read_to_string(&spectrum).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,index,ratio,nesum"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2 * 16);
    assert_eq!(rows[0][..3], [5.0, 1.0, 1.0]);
    assert!(!text.contains('\r'));

    let report = mlp_report("orthoreg", &cfg, &g, &d, 2).unwrap();
    let path = dir.path().join("report.json");
    report.write_json(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["schema_version"], REPORT_SCHEMA_VERSION);
    assert_eq!(v["trials"].as_array().unwrap().len(), 2);
    assert!(v["std"].as_f64().unwrap() >= 0.0);
    assert!(v["wall_clock_s"].is_number());
    assert_eq!(v["config"]["regularizer"]["kind"], "ortho_reg");
    let back: RunReport = serde_json::from_value(v).unwrap();
    assert_eq!(back, report);

    let csv = dir.path().join("table.csv");
    write_reports_csv(&[report.clone(), report], &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("name,mean,std,trial_0,trial_1\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn coldstart_split_hides_isolated_nodes() {
    let (g, d) = small_problem();
    let split = coldstart_split(&g, &d, 10.0, false, 20).unwrap();
    assert!(!split.isolated.is_empty());
    assert_eq!(split.kept.len() + split.isolated.len(), d.n_nodes());
    assert!(split.isolated.iter().all(|i| g.degree(*i) <= split.threshold_degree));
    assert!(split.isolated_test.iter().all(|i| d.test_idx.contains(i)));
    assert_eq!(split.graph.n_nodes(), split.kept.len());
    // Every surviving edge joins two kept nodes.
    let expected = g
        .undirected_edges()
        .iter()
        .filter(|(u, v)| !split.isolated.contains(u) && !split.isolated.contains(v))
        .count();
    assert_eq!(split.graph.n_edges(), expected);
    for (u, v) in split.graph.undirected_edges() {
        assert!(g.neighbors(split.kept[u]).contains(&split.kept[v]));
    }
    let mut per_class = vec![0; d.n_classes];
    for &i in &split.data.train_idx {
        per_class[split.data.labels[i] as usize] += 1;
    }
    assert!(per_class.iter().all(|&c| c == 20));
    assert!(split.data.validate().is_ok());

    let cfg = quick_cfg(ortho());
    let report = coldstart_experiment("orthoreg", &cfg, &split, &d, 2).unwrap();
    assert_eq!(report.trials.len(), 2);
    assert_eq!(report.extra["n_isolated_test"], split.isolated_test.len());
    let gcn = coldstart_gcn("gcn", &GcnConfig::default(), &split, &d, 2).unwrap();
    assert!(gcn.trials.iter().all(|a| (0.0..=1.0).contains(a)));
    assert!(matches!(
        coldstart_split(&g, &d, 0.0, false, 20),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn robustness_endpoints() {
    let (g, d) = small_problem();
    let cfg = quick_cfg(ortho());
    let gcn = GcnConfig {
        epochs: 60,
        ..Default::default()
    };
    let rows = robustness_sweep(&cfg, &gcn, &g, &d, &[0.0, 1.0], 2).unwrap();
    assert_eq!(mask_edges(&g, 0.0, 11).undirected_edges(), g.undirected_edges());
    let plain = mlp_report("x", &cfg, &g, &d, 2).unwrap();
    let plain_gcn = gcn_report("x", &gcn, &g, &d, 2).unwrap();
    assert_eq!(rows[0].orthoreg.trials, plain.trials);
    assert_eq!(rows[0].gcn.trials, plain_gcn.trials);
    let chance = 1.0 / d.n_classes as f64;
    for r in [&rows[1].orthoreg, &rows[1].gcn] {
        assert!(
            r.mean.is_finite() && r.mean >= chance,
            "{} at ratio 1: {}",
            r.name,
            r.mean
        );
    }
    assert!(robustness_sweep(&cfg, &gcn, &g, &d, &[1.5], 1).is_err());
}

#[test]
fn ablation_and_tuning_cover_their_grids() {
    let (g, d) = small_problem();
    let cfg = TrainConfig {
        epochs: 20,
        ..quick_cfg(ortho())
    };
    let rows = ablation_suite(&cfg, &g, &d, 1).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["mlp", "alpha=0", "beta=0", "T=1", "T=2", "T=3"]);
    assert!(matches!(
        ablation_suite(&quick_cfg(RegularizerSpec::None), &g, &d, 1),
        Err(Error::InvalidConfig(_))
    ));

    let grid = coarse_grid(&[(2e-3, 1e-6)]);
    assert_eq!(grid.len(), 13);
    assert!(grid.contains(&(5e-4, 5e-4 / 1e4)));
    let small = [(1e-3, 1e-6), (5e-2, 5e-5)];
    let tuned = tune_orthoreg(&cfg, &g, &d, &small, 1).unwrap();
    let best = tuned.grid.iter().map(|p| p.val_acc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(tuned.val_acc, best);
    assert!(small.contains(&(tuned.alpha, tuned.beta)));
}

#[test]
fn presets_and_spectral_diagnostic() {
    assert_eq!(orthoreg_preset("Cora").map(|p| (p.alpha, p.beta)), Some((2e-3, 1e-6)));
    assert_eq!(
        orthoreg_preset("citeseer").map(|p| (p.alpha, p.beta)),
        Some((1e-3, 1e-6))
    );
    assert_eq!(orthoreg_preset("pubmed").map(|p| (p.alpha, p.beta)), Some((2e-6, 2e-6)));
    assert!(orthoreg_preset("chameleon").is_none());

    let (g, d) = small_problem();
    let cfg = quick_cfg(RegularizerSpec::Laplacian { lambda: 0.1 });
    let s = spectral_diagnostic("lap", &cfg, &g, &d, 30, 2).unwrap();
    assert_eq!(s.mean_normalized.len(), 16);
    assert!((s.mean_normalized[0] - 1.0).abs() < 1e-12);
    assert!(s.mean_normalized.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    assert_eq!(s.nesum_per_seed.len(), 2);
}
