use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the documented validity envelope.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration violated a structural invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Matrix dimensions did not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A scenario was too degenerate for the requested estimate
    /// (rank-deficient submatrix, empty noise subspace, parallel rays, ...).
    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    /// An estimate landed outside its physical range.
    #[error("estimate out of range: {0}")]
    OutOfRange(String),

    /// A dense linear-algebra routine failed to converge or was singular.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// Failure in a named pipeline stage.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Name of the outermost stage label, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
