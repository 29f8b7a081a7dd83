//! End-to-end orchestration: dataset generation, training and model
//! selection, and the two validation protocols.

pub mod config;
pub mod generate;
pub mod stats;
pub mod synthetic;
pub mod train;
pub mod validate;

use thiserror::Error;

pub use config::{run, RunConfig, RunSummary};
pub use generate::{generate_dataset, GenerationConfig, GenerationStats, ModelTemplate, Support};
pub use train::{train_leaderboard, Leaderboard, LeaderboardRow, TrainingGrids};
pub use validate::{validate_generated, validate_record, SimulatorOracle, ValidationReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{failed} of {total} solves failed, above the allowed failure rate")]
    FailureRate { failed: usize, total: usize },
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Basis(#[from] crate::basis::BasisError),
    #[error(transparent)]
    Structure(#[from] crate::structures::StructureError),
    #[error(transparent)]
    Integrator(#[from] crate::integrator::IntegratorError),
    #[error(transparent)]
    Surrogate(#[from] crate::surrogates::SurrogateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
