//! A small, deterministic neural-network kernel.
//!
//! Everything is `f64`, single-threaded and driven by an explicit seed, so a
//! training run is a pure function of `(seed, data order, config)`.

mod embedding;
mod gradcheck;
mod layer;
mod matrix;
mod mlp;
mod scaler;
mod train;

pub use embedding::{EmbeddingGrads, EmbeddingTable};
pub use gradcheck::{grad_check, grad_check_strided, grad_check_with, relative_error, GradCheckReport, Stencil};
pub use layer::{glorot_bound, Activation, Dense, DenseGrads};
pub use matrix::Matrix;
pub(crate) use mlp::check_classifier as mlp_check_classifier;
pub use mlp::{backward, cross_entropy, mlp_forward, Gradients, Mlp, MlpCache, MlpGrads, MlpSpec};
pub use scaler::Standardizer;
pub use train::{accuracy_and_loss, sgd_step, train_classifier, Classifier, EpochStats, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(&'static str),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::DimensionMismatch { expected, got })
    }
}
