use std::path::PathBuf;

/// Error type shared across the crate. Variants group into the three CLI
/// failure classes: configuration (exit 2), data/shape (exit 3), and
/// numerical/optimization (exit 4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("alignment: {0}")]
    Alignment(String),

    #[error("domain: {0}")]
    Domain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Data(_)
            | Error::Shape(_)
            | Error::Alignment(_)
            | Error::Domain(_)
            | Error::Checkpoint(_)
            | Error::Io { .. } => 3,
            Error::Infeasible(_) | Error::Numerical(_) | Error::Fit(_) => 4,
        }
    }
}
