use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("design error: {0}")]
    Design(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("economics error: {0}")]
    Economics(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Schema(_)
                | Error::Argument(_)
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::Design(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
