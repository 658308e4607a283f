//! Composition featurization from per-element descriptor tables, GA
//! descriptor selection with random-forest fitness, and expected-improvement
//! Bayesian optimization over bounded composition simplices.

pub mod analysis;
pub mod bo_engine;
pub mod cli;
pub mod composition;
pub mod element_data;
pub mod elements;
pub mod evaluation;
pub mod featurize;
pub mod ga_select;
pub mod models;
pub mod seeding;
pub mod stats;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] element_data::DataError),
    #[error(transparent)]
    Composition(#[from] composition::CompositionError),
    #[error(transparent)]
    Featurize(#[from] featurize::FeaturizeError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Bo(#[from] bo_engine::BoError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
}
