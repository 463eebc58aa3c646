//! File formats, ingest, experiment runner and parallel helpers around
//! `choicelab-core`.
//!
//! - [`schema`]: column mapping and codebook (TOML)
//! - [`ingest`]: CSV loaders and the canonical re-serialization
//! - [`vectors`]: plain-text word vectors
//! - [`checkpoint`]: versioned text checkpoints for every trained model
//! - [`report`]: metrics, parameter and diagnostics tables
//! - [`experiment`]: config-driven runs into `runs/<timestamp>-<hash>/`
//! - [`gradcheck`]: finite-difference checks of every model gradient
//! - [`parallel`]: rayon chain and tree runners

use std::path::{Path, PathBuf};

pub mod checkpoint;
pub mod experiment;
pub mod gradcheck;
pub mod ingest;
pub mod parallel;
pub mod report;
pub mod schema;
pub mod vectors;


#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("{path}: missing column {column:?}; available headers: {available:?}")]
    MissingColumn { path: PathBuf, column: String, available: Vec<String> },
    #[error("{path}: row {row}, column {column:?}: cannot parse {value:?}")]
    UnparsableValue { path: PathBuf, row: usize, column: String, value: String },
    #[error("{path}: row {row}: probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { path: PathBuf, row: usize, value: f64 },
    #[error("{path}: row {row}, column {column:?}: unknown level {value:?}")]
    UnknownCategoryLevel { path: PathBuf, row: usize, column: String, value: String },
    #[error("{path}: row {row}: duplicate participant {user}")]
    DuplicateParticipant { path: PathBuf, row: usize, user: String },
    #[error("{path}: line {line}: vector has {got} components, expected {expected}")]
    DimensionInconsistent { path: PathBuf, line: usize, expected: usize, got: usize },
    #[error("{path}: line {line}: {message}")]
    Unparsable { path: PathBuf, line: usize, message: String },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Data(#[from] choicelab_core::data::DataError),
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}
