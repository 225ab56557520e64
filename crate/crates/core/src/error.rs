use thiserror::Error;

/// Errors produced by the kernels, optimizers and persistence layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is zero")]
    ZeroInput,

    #[error("matrix is numerically rank deficient")]
    RankDeficient,

    #[error("rank {k} out of range 1..={max}")]
    InvalidRank { k: usize, max: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeError {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error("missing gradient for block `{0}`")]
    MissingGradient(String),

    #[error("block {rows}x{cols} cannot be factored within the budget of rate {rate}")]
    BlockTooSmall { rows: usize, cols: usize, rate: f64 },

    #[error("checkpoint format error: {0}")]
    FormatError(String),

    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::ShapeError { expected, got }
    }
}
