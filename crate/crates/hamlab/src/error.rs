//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside the sphere chart: |z| = {z}")]
    SphereDomain { z: f64 },

    #[error("integrand is not compactly supported inside the plane window")]
    UnsupportedWindow,

    #[error("parse error at byte {offset}: expected {expected}")]
    Parse { offset: usize, expected: String },

    #[error("unknown symbol `{name}` at byte {offset} (not a coordinate of this manifold)")]
    Bind { name: String, offset: usize },

    #[error("time symbol used outside sin/cos(2*pi*k*t) at byte {offset}")]
    Periodicity { offset: usize },

    #[error("operands live on different manifolds")]
    ManifoldMismatch,

    #[error("operation requires a closed manifold, got the plane")]
    OpenManifold,

    #[error("implicit midpoint iteration failed to converge (residual {residual:e} after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("vector field is not exact: fundamental-cycle period {period:e} exceeds tolerance")]
    NonExactField { period: f64 },

    #[error("time-1 map is the identity; the action spectrum is not a finite table")]
    DegenerateIdentity,

    #[error("capping is incompatible with the orbit: {reason}")]
    IncompatibleCapping { reason: String },

    #[error("loops are sampled on different time grids ({left} vs {right})")]
    GridMismatch { left: usize, right: usize },

    #[error("canonical lift requires a contraction family")]
    MissingContraction,

    #[error("shift constant is not constant across probes (std dev {stddev:e})")]
    ShiftNotConstant { stddev: f64 },

    #[error("monodromy value varies across basepoints (spread {spread:e})")]
    BasepointDependent { spread: f64 },

    #[error("family members do not share the time-1 map (max chart distance {distance:e})")]
    EndpointMismatch { distance: f64 },

    #[error("Hamiltonian is not normalized (tag {tag}); normalize before computing the spectrum")]
    NotNormalized { tag: String },

    #[error("scenario error at line {line}: {message}")]
    Scenario { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn scenario(line: usize, message: impl Into<String>) -> Self {
        Error::Scenario {
            line,
            message: message.into(),
        }
    }
}
