use crate::autodiff::AdError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid body model: {0}")]
    InvalidModel(String),
    #[error("point {index} lies at or behind the camera plane (depth {depth})")]
    BehindCamera { index: usize, depth: f64 },
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("unsupported format version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },
    #[error("checksum mismatch")]
    Checksum,
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:.6e})"
    )]
    NonFiniteLoss { epoch: usize, batch: usize, param_norm: f64 },
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension { what, expected, got }
    }

    pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::dim(what, expected, got))
        }
    }
}
