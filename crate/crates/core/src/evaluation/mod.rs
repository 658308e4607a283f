//! Prediction metrics and the repeated k-fold cross-validation harness.

pub mod cv;
pub mod metrics;

use thiserror::Error;

use crate::models::ModelError;

pub use cv::{fold_partition, kfold_cv, CvOptions, CvResult, Metric, ModelSpec};
pub use metrics::{f1_binary, f1_weighted, mae, ClassificationCounts};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),
    #[error("need k >= 2 folds, got {0}")]
    InvalidFolds(usize),
    #[error("need repeats >= 1")]
    InvalidRepeats,
    #[error("{rows} rows cannot fill {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error("{0}")]
    Incompatible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
