use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// A row in an input file could not be parsed.
    #[error("{path}: row {row}, field `{field}`: {message}")]
    Malformed {
        path: PathBuf,
        row: usize,
        field: String,
        message: String,
    },

    #[error("unknown {what} `{code}`")]
    Referential { what: &'static str, code: String },

    #[error("degenerate input for region `{region}`: {message}")]
    Degenerate { region: String, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("out of domain: {0}")]
    Domain(String),

    #[error("prediction failed on sample {sample}: {message}")]
    Predict { sample: usize, message: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
