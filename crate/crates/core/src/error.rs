use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Invalid hyper-parameters or run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("number of heads {heads} does not divide embedding size {embed}")]
    HeadsDoNotDivide { embed: usize, heads: usize },

    #[error("mlp input width {found} does not match expected width {expected}")]
    MlpInputMismatch { expected: usize, found: usize },

    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    /// Stable machine-readable reason tag.
    pub fn reason(&self) -> &'static str {
        match self {
            ConfigError::HeadsDoNotDivide { .. } => "heads_do_not_divide_embedding",
            ConfigError::MlpInputMismatch { .. } => "mlp_input_mismatch",
            ConfigError::Invalid(_) => "invalid_config",
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sample {id}: {message}")]
    Invariant { id: String, message: String },

    #[error("sample {id}: {message}")]
    Inconsistent { id: String, message: String },

    #[error("empty pixel set at step {step}")]
    EmptyPixelSet { step: usize },

    #[error("{0}")]
    Checkpoint(String),
}

impl DataError {
    pub fn reason(&self) -> &'static str {
        match self {
            DataError::Empty => "empty_dataset",
            DataError::Parse { .. } => "parse_error",
            DataError::Invariant { .. } => "invariant_violation",
            DataError::Inconsistent { .. } => "inconsistent_dataset",
            DataError::EmptyPixelSet { .. } => "empty_pixel_set",
            DataError::Checkpoint(_) => "bad_checkpoint",
        }
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(ConfigError::Invalid(msg.into()))
}
