use thiserror::Error;

/// Errors raised across the solver, model and training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("mode cutoff {cutoff} too large for grid extent {extent} (needs extent >= 2*cutoff)")]
    CutoffTooLarge { cutoff: usize, extent: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("tensor is not registered on this tape")]
    MissingNode,

    #[error("solution diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("stiffness limit: {0}")]
    Stiffness(String),

    #[error("forward pass produced non-finite values in stage `{stage}`")]
    ForwardDivergence { stage: String },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDivergence { epoch: usize, batch: usize },

    #[error("dataset generation failed for sequence {sequence}: {source}")]
    Generation {
        sequence: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("matrix is singular or ill-conditioned: {0}")]
    Singular(String),

    #[error("degenerate target: reference norm is zero")]
    DegenerateTarget,

    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
