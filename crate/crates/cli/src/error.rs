use ltae_core::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{message}")]
    Config {
        reason: &'static str,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(reason: &'static str, message: impl Into<String>) -> Self {
        CliError::Config {
            reason,
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// `(kind, exit code, reason tag)`.
    pub fn classify(&self) -> (&'static str, i32, &'static str) {
        match self {
            CliError::Config { reason, .. } => ("config", EXIT_CONFIG, reason),
            CliError::Io { .. } => ("data", EXIT_DATA, "io_error"),
            CliError::Core(e) => match e {
                CoreError::Config(c) => ("config", EXIT_CONFIG, c.reason()),
                CoreError::Data(d) => ("data", EXIT_DATA, d.reason()),
                CoreError::Io(_) => ("data", EXIT_DATA, "io_error"),
                CoreError::Dimension { .. } => ("data", EXIT_DATA, "dimension_mismatch"),
                CoreError::Contract(_) => ("data", EXIT_DATA, "contract_violation"),
                CoreError::Divergence { .. } => ("numeric", EXIT_NUMERIC, "divergence"),
                CoreError::UndefinedMetric(_) => ("numeric", EXIT_NUMERIC, "undefined_metric"),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.classify().1
    }

    /// One-line JSON description for standard error.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            code: i32,
            reason: &'a str,
            message: String,
        }
        let (error, code, reason) = self.classify();
        serde_json::to_string(&Line {
            error,
            code,
            reason,
            message: self.to_string(),
        })
        .expect("plain strings serialize")
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<ltae_core::DataError> for CliError {
    fn from(e: ltae_core::DataError) -> Self {
        CliError::Core(e.into())
    }
}
