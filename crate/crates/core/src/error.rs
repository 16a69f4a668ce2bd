use thiserror::Error;

/// Errors surfaced by the library. The CLI maps these onto process exit
/// codes: parameter errors exit 2, I/O errors exit 3, numerical
/// non-convergence exits 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical non-convergence: {context} (achieved residual {residual:.3e})")]
    NonConvergence { context: String, residual: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Unsupported(_) => 2,
            Error::Io(_) => 3,
            Error::NonConvergence { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
