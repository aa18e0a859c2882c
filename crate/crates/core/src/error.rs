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
    #[error("malformed header {path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("payload length mismatch: header declares {expected} values, payload holds {found}")]
    PayloadLength { expected: usize, found: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate intensity range: volume is constant")]
    ConstantVolume,
    #[error("zero data range")]
    ZeroDataRange,
    #[error("zero-norm reference volume")]
    ZeroNormReference,
    #[error("empty input: {0}")]
    Empty(String),
    #[error("imaginary residual {residual:e} exceeds bound {bound:e}")]
    ImaginaryResidual { residual: f64, bound: f64 },
    #[error("backward already run on this tape")]
    BackwardTwice,
    #[error("backward requires a scalar loss, got {0} elements")]
    NonScalarLoss(usize),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("checkpoint does not match architecture: {0}")]
    CheckpointMismatch(String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn header(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Header {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
