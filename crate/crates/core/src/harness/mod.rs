//! Baselines, metrics, cross-validation, sweeps and confidence gating.
//!
//! [`Pipeline`] owns the data and memoizes every stage by content hash, so
//! repeated experiments over the same books only redo what their
//! configuration changes.

mod baselines;
mod cache;
mod coverage;
mod crossval;
mod experiment;
mod gate;
mod metrics;
mod report;
mod sweep;

use thiserror::Error;

pub use baselines::{baseline_rank, BaselineKind};
pub use cache::{content_hash, hash_parts, StageCache, StageCounts};
pub use coverage::{coverage_diagnostic, CoverageReport};
pub use crossval::{crossval_split, FoldAssignment};
pub use experiment::{
    pretrain_model, run_experiment, train_model, ExperimentConfig, ExperimentOutcome, Pipeline, RetrievalMethod, RunPredictions, ARM_BOOK_FREQ,
    ARM_CONTEXT_FREQ, ARM_PLAIN, ARM_PRETRAINED, ARM_RANDOM,
};
pub use gate::{confidence_gate, gate_sweep, GateResult};
pub use metrics::{mrr, precision_at_k, Metrics, Prediction};
pub use report::{summarize, ArmSummary, EvalReport, MeanStd, RunRecord};
pub use sweep::{run_sweep, SweepParam, SweepResult, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{books} books cannot fill {folds} folds")]
    TooFewBooks { books: usize, folds: usize },
    #[error("{0}")]
    Data(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}
