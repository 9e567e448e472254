use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed token string {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error("cannot convert {input:?}: {reason}")]
    Conversion { input: String, reason: String },

    #[error("unknown token {token:?} in {input:?}")]
    UnknownToken { token: String, input: String },

    #[error("sample {index} has {len} tokens, exceeds limit of {limit} (max length N={max_len} minus EOS)")]
    TooLong {
        index: usize,
        len: usize,
        limit: usize,
        max_len: usize,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: recon={recon} kl={kl} corr={corr}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        recon: f64,
        kl: f64,
        corr: f64,
    },

    #[error("checkpoint lineage mismatch for {what}: expected {expected}, found {found}")]
    Lineage {
        what: String,
        expected: String,
        found: String,
    },

    #[error("record {index} ({selfies:?}): {source}")]
    Record {
        index: usize,
        selfies: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid structure {0:?}")]
    InvalidStructure(String),

    #[error("cheminformatics toolkit: {0}")]
    Toolkit(String),

    #[error("source exhausted: {0}")]
    Exhausted(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// A CSV error with the file it concerns.
    pub fn csv(path: &std::path::Path, e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Config(format!("{}: {other:?}", path.display())),
        }
    }

    /// Whether the error is a user-facing validation problem (exit code 1)
    /// rather than a runtime failure (exit code 2).
    pub fn is_validation(&self) -> bool {
        if let Error::Record { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::Config(_)
                | Error::Lineage { .. }
                | Error::Parse { .. }
                | Error::UnknownToken { .. }
                | Error::Empty(_)
                | Error::TooLong { .. }
        )
    }
}
