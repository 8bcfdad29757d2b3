use std::path::PathBuf;

use thiserror::Error;

/// Failures of a run, each mapped to a distinct exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unparseable config, unknown keys, bad version or invalid parameters.
    #[error("schema error: {0}")]
    Schema(String),

    /// The computation itself failed.
    #[error(transparent)]
    Numerical(#[from] deconv_erm::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// Machine-readable form printed on stderr and saved as `error.json`.
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Core errors raised while checking a config before any computation.
pub(crate) fn schema(e: deconv_erm::Error) -> CliError {
    CliError::Schema(e.to_string())
}
