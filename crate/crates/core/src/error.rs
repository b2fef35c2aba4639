use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes disagree; `detail` names the offending axes.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A caller broke an operation's precondition.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// NaN or infinity produced (or consumed) somewhere it is not allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("load error in {path}: {field}: {detail}")]
    Load {
        path: PathBuf,
        field: String,
        detail: String,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            field: field.into(),
            detail: detail.into(),
        }
    }
}
