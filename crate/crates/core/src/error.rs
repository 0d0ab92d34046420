use thiserror::Error;

/// Errors produced by the library. Each variant names the operation that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension error: {msg}")]
    Dimension { op: &'static str, msg: String },

    #[error("{op}: sparsity error: s = {s} is outside [2, {max}]")]
    Sparsity { op: &'static str, s: u64, max: usize },

    #[error("slice_for_layer: layer '{layer}' asks for {what} = {got} but the basis set stores {max}")]
    Slice {
        layer: String,
        what: &'static str,
        got: usize,
        max: usize,
    },

    #[error("{op}: numerical error: {msg}")]
    Numerical { op: &'static str, msg: String },

    #[error("fit_adapter: divergence at iteration {iteration} (error {error:e}, was {previous:e})")]
    FitDivergence {
        iteration: usize,
        error: f64,
        previous: f64,
    },

    #[error("train: non-finite loss at step {step}")]
    TrainDivergence { step: usize },

    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("landscape_grid: anchor coordinates are collinear")]
    Geometry,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("container format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim(op: &'static str, msg: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        msg: msg.into(),
    }
}
