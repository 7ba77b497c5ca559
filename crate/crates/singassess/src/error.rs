//! Error type for the IO layer and the exit-code mapping used by the CLI.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Contract(#[from] singassess_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unreadable audio: {reason}")]
    UnreadableAudio { path: PathBuf, reason: String },
    #[error("{path}: unsupported codec: {reason}")]
    UnsupportedCodec { path: PathBuf, reason: String },
    #[error("{path}: audio has no samples")]
    ZeroLengthAudio { path: PathBuf },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("summarizer: {0}")]
    Summarizer(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl std::fmt::Display) -> Self {
        Error::Format { path: path.into(), reason: reason.to_string() }
    }

    /// 2 for contract violations, 3 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::UnreadableAudio { .. } | Error::Summarizer(_) => 3,
            _ => 2,
        }
    }
}

/// Shorthand for wrapping `std::io` results with the path involved.
pub trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
