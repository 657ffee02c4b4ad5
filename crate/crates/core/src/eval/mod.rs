//! Evaluation pipeline: split ingestion, ranking metrics with low-FPR
//! operating points, and the repeated-run experiment driver.

mod experiment;
mod ingest;
mod metrics;

pub use experiment::{
    build_id, derived_seed, metric_bundle, run_experiment, run_once, run_once_with_stop,
    summarize, ComponentFactory, EvalReport, ExperimentConfig, MetricSummary, Provenance,
    RunComponents, RunStatus, METRIC_NAMES,
};
pub use ingest::{
    group_split, ingest, DatasetKind, IngestOutput, PerUserCap, SplitManifest, SplitSpec,
    UserCounts,
};
pub use metrics::{
    acc_at_fpr1, auc, pr_auc, roc_curve, tpr_at_fpr, write_roc_csv, write_roc_loglog_csv,
    LabeledScore, RocPoint,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error in {file} line {line}: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },
    #[error("metrics require at least one member and one non-member score")]
    SingleClass,
    #[error("experiment component failed: {0}")]
    Component(String),
}
