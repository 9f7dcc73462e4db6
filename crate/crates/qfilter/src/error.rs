use thiserror::Error;

/// Errors produced by simulation, estimation and filtering routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("measurement branch has zero probability")]
    ZeroProbability,

    #[error("projector set is incomplete (does not sum to identity)")]
    IncompleteProjectors,

    #[error("posterior normalizer is zero (likelihood vanished on the grid)")]
    ZeroNormalizer,

    #[error("degenerate density: {0}")]
    Degenerate(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("insufficient history: need at least {needed} observations, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("no kernel neighbors near the conditioning window")]
    NoNeighbors,

    #[error("noninformative point: |T'(x)| below threshold")]
    NoninformativePoint,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad configuration rather than runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
