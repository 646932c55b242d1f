use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by how a caller should react: file problems,
/// numeric breakdowns, and violated preconditions. [`Error::exit_code`]
/// turns that grouping into the command-line exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported trajectory file version {0} (expected 1)")]
    UnsupportedVersion(u32),

    #[error("corrupt trajectory file: {0}")]
    Corruption(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("need at least {needed} layers, trajectory has {got}")]
    InsufficientLayers { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("point cloud has {got} points, cap is {cap}; subsample upstream")]
    TooManyPoints { got: usize, cap: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// 2 = file/format, 3 = numeric failure, 4 = precondition violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_)
            | Error::Format(_)
            | Error::UnsupportedVersion(_)
            | Error::Corruption(_)
            | Error::Invariant(_) => 2,
            Error::Numeric(_) => 3,
            Error::Precondition(_)
            | Error::InsufficientLayers { .. }
            | Error::Config(_)
            | Error::TooManyPoints { .. } => 4,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub(crate) fn require_layers(got: usize, needed: usize) -> Result<()> {
    if got < needed {
        Err(Error::InsufficientLayers { needed, got })
    } else {
        Ok(())
    }
}
