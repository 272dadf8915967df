use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The CLI maps each variant onto a process exit code via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("basis error: {0}")]
    Basis(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("fit failed after {iterations} iterations (penalized deviance {deviance}): {reason}")]
    Fit {
        reason: String,
        iterations: usize,
        deviance: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("bootstrap failed: {dropped} of {requested} replicates dropped")]
    Bootstrap { dropped: usize, requested: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn fit(reason: impl Into<String>) -> Self {
        Error::Fit {
            reason: reason.into(),
            iterations: 0,
            deviance: f64::NAN,
        }
    }

    /// Exit codes: 2 input/schema, 3 fit/estimation, 4 bootstrap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Alignment(_)
            | Error::Range(_)
            | Error::Schema(_)
            | Error::Config(_)
            | Error::Io { .. }
            | Error::Input { .. } => 2,
            Error::Estimation(_) | Error::Basis(_) | Error::Fit { .. } | Error::Contract(_) => 3,
            Error::Bootstrap { .. } => 4,
        }
    }
}
