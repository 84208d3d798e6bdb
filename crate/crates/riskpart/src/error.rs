use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants map onto the process exit codes used by the CLI: `Usage` is a
/// caller mistake (bad config, violated precondition), `Data` means the
/// input files are unusable, and the remaining variants are runtime
/// failures surfaced to the caller.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or violated API precondition.
    #[error("usage: {0}")]
    Usage(String),

    /// Malformed or inconsistent input data.
    #[error("data: {0}")]
    Data(String),

    /// Degenerate regression problem (no usable columns, fewer rows than
    /// columns, nonfinite values in the design).
    #[error("fit: {0}")]
    Fit(String),

    /// Markov chain failure (nonfinite energy, unusable initial state).
    #[error("chain: {0}")]
    Chain(String),

    /// Every cell of a hyperparameter grid failed; partial failures are
    /// reported per cell instead.
    #[error("grid: {0}")]
    Grid(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
