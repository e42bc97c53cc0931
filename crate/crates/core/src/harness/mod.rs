//! Benchmark binarization, evaluation runs, sweeps, analyses and plots.

pub mod binarize;
pub mod config;
pub mod evaluate;
pub mod pipeline;
pub mod plot;
pub mod sweep;

pub use binarize::{binarize, binarize_all, rule_for, BinarizationRule};
pub use config::Config;
pub use evaluate::{
    evaluate_classification, evaluate_correlation, EvaluationReport, Prediction, ReportScores,
};
pub use pipeline::{run_pipeline, PipelineSummary};
pub use plot::{emit_report_plots, emit_sweep_plots, read_sweep_csv};
pub use sweep::{fit_analysis, run_sweep, SweepGrid, SweepReport, SweepRow, XField};
