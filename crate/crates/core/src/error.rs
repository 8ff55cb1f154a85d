use thiserror::Error;

pub type Result<T> = std::result::Result<T, DrnError>;

#[derive(Debug, Error)]
pub enum DrnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A hidden or output unit with zero total conductance; its steady-state
    /// quotient is undefined.
    #[error("isolated node: layer {layer}, unit {unit}")]
    IsolatedNode { layer: usize, unit: usize },

    /// Layer whose weights and biases are all zero, giving a zero gain.
    #[error("degenerate layer {layer}: gain is zero")]
    DegenerateLayer { layer: usize },

    #[error("numeric failure in layer {layer} at iteration {iteration}")]
    NumericFailure { layer: usize, iteration: usize },

    #[error("no convergence after {iterations} iterations (last max |dv| = {last_delta:e})")]
    NotConverged { iterations: usize, last_delta: f64 },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("netlist line {line}: {message}")]
    Netlist { line: usize, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training failed on batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<DrnError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DrnError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        DrnError::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        DrnError::InvalidParameter(msg.into())
    }
}
