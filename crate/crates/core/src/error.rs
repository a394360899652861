use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants map onto the exit-code classes used by the command-line front end:
/// [`Error::Config`] is a configuration problem, everything else is a
/// contract or data problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: `{field}` = {value} is outside its valid range ({reason})")]
    Domain {
        field: &'static str,
        value: f64,
        reason: String,
    },
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
