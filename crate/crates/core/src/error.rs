use thiserror::Error;

/// Errors produced by the solver toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("fields live on different meshes")]
    MeshMismatch,

    #[error("exponent value {value} at ({x}, {y}) outside claimed bounds [{p1}, {p2}]")]
    ExponentOutOfBounds { value: f64, x: f64, y: f64, p1: f64, p2: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite on the free vertices (curvature {curvature:e})")]
    NotPositiveDefinite { curvature: f64 },

    #[error("radial case violates the nondegeneracy condition at r = {radius}: {reason}")]
    RadialCondition { radius: f64, reason: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
