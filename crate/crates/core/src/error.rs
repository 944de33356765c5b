use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// [`Error::is_data_error`] separates problems with input data (bad files,
/// malformed records, empty trajectories) from problems with parameters or
/// configuration, which the CLI maps to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Lex { line: usize, message: String },

    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("empty trajectory for snippet `{snippet}`")]
    EmptyTrajectory { snippet: String },

    #[error("{file}: {field}: {message}")]
    Data {
        file: String,
        field: String,
        message: String,
    },

    #[error("trajectory refers to unknown snippet `{id}`")]
    UnknownSnippet { id: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::Param(message.into())
    }

    pub(crate) fn data(
        file: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Data {
            file: file.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by input data rather than by configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Lex { .. }
                | Error::EmptyTrajectory { .. }
                | Error::Data { .. }
                | Error::UnknownSnippet { .. }
                | Error::EmptyDataset(_)
                | Error::Checkpoint(_)
                | Error::Io { .. }
                | Error::NonFinite { .. }
        )
    }
}
