use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] hybrec_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    #[error("{what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("too many malformed lines: {malformed} of {lines}")]
    TooManyMalformed { malformed: usize, lines: usize },

    #[error("{0} already exists with different contents; use a fresh data directory")]
    Conflict(PathBuf),

    #[error("{path}: digest does not match its .sha256 sidecar")]
    Tampered { path: PathBuf },

    #[error("missing artifact {0}; run the stage that produces it first")]
    MissingArtifact(PathBuf),

    #[error("unknown paper id {0:?}")]
    UnknownPaper(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format { what, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
