//! Crate-wide error type.

/// Errors produced by any sungold component.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor/matrix geometry disagreement; the message names both shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Model-graph text could not be parsed or validated.
    #[error("cfg line {line}: {msg}")]
    Cfg { line: usize, msg: String },

    /// Weights blob does not match the model graph.
    #[error("weights: {0}")]
    Weights(String),

    /// Malformed annotation, dataset, or report input.
    #[error("{0}")]
    Data(String),

    /// Metrics cannot be computed from an empty confusion matrix.
    #[error("no matched images")]
    NoMatchedImages,

    /// Training aborted on a NaN/inf loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
