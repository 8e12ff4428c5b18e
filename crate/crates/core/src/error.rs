use thiserror::Error;

/// Errors produced anywhere in the device / exciton / fit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid material parameters: {0}")]
    Materials(String),

    #[error("mesh generation failed: {0}")]
    Mesh(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("Newton iteration did not converge after {iterations} iterations (last residual {last_residual:e})")]
    Convergence {
        iterations: usize,
        last_residual: f64,
        history: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: row {row}: {message}")]
    Schema {
        context: String,
        row: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
