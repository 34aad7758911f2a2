use thiserror::Error;

/// Errors produced by the kinematics, geometry, and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("rotation is not orthonormal with determinant +1")]
    NotOrthonormal,
    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("points are antipodal; the logarithmic map is undefined")]
    AntipodalPoints,
    #[error("vector is not tangent at the base point (|x·u| = {0})")]
    NotTangent(f64),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("no reachable placement found after {0} samples")]
    Unreachable(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
