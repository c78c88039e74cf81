use thiserror::Error;

/// Errors raised by the engine.
///
/// Validation findings about a model are reported as data in
/// [`crate::model::ValidationReport`]; this type is for failures that stop an
/// operation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input such as NaN, infinite values or inconsistent lengths.
    #[error("invalid input: {0}")]
    Input(String),
    /// A model file did not parse against the schema.
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    /// A model failed validation.
    #[error("model rejected: {0}")]
    Invalid(String),
    /// Argument outside the domain of the operation (e.g. crossing a reset point).
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition of the operation is not met.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// The model's dependence class cannot be handled by a grid solver.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    /// Numerical failure that should not happen for validated input.
    #[error("internal error: {0}")]
    Internal(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by the caller's data rather than the engine.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
