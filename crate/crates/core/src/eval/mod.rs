//! Training loops, comparators and experiment harnesses.

mod baselines;
mod bench;
mod experiments;
mod report;
mod train;

pub use baselines::{
    gcn_backward, gcn_comparator, gcn_forward, gcn_loss_and_grad, gcn_predict, sgc_comparator, sgc_propagate,
    train_gcn_on, train_linear, FitSummary, GcnConfig, GcnForward, GcnGradients, GcnParams, SgcConfig,
};
pub use bench::{gcn_forward_batch, inference_benchmark, receptive_layers, BenchConfig, BenchRow};
pub use experiments::{
    ablation_suite, coarse_grid, coldstart_experiment, coldstart_gcn, coldstart_split, gcn_report, mlp_report,
    orthoreg_preset, robustness_sweep, sgc_report, spectral_diagnostic, tune_orthoreg, ColdStartSplit, RobustnessRow,
    SpectrumSummary, TunePoint, TuneResult,
};
pub use report::{
    mean_std, run_trials, write_metrics_jsonl, write_reports_csv, write_spectrum_csv, RunReport, REPORT_SCHEMA_VERSION,
};
pub use train::{evaluate, train, EpochRecord, TrainConfig, TrainHistory};
