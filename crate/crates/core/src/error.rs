//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {detail}")]
    Json { path: PathBuf, detail: String },

    /// Schema violations; messages name the offending field and index.
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("PDB parse error at line {line}: {detail}")]
    PdbParse { line: usize, detail: String },

    /// Precondition failures on operation arguments.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sigma {sigma} outside table range [{min}, {max}]")]
    SigmaOutOfRange { sigma: f64, min: f64, max: f64 },

    #[error("chain mismatch: {0}")]
    ChainMismatch(String),

    /// Non-finite values or other numerical failures; carries a diagnostic.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no ranking signal: all decoy energies are equal")]
    NoRankingSignal,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
