//! Surrogate models: Gaussian-process regression and random forests.

pub mod forest;
pub mod gpr;

use thiserror::Error;

pub use forest::{rf_fit, rf_predict, DecisionTree, ForestConfig, MaxFeatures, RandomForest, Task};
pub use gpr::{gpr_fit, gpr_predict, AutoTune, GprConfig, GprModel, KernelChoice, KernelConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("no training rows")]
    Empty,
    #[error("expected {expected} targets, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value in model input")]
    NonFinite,
    #[error("kernel matrix not positive definite after jitter up to {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("query has {found} columns, model was trained on {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}
