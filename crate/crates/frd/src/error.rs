//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Geometry guard violated (torus too small for the requested scales).
    #[error("geometry guard: side length M = {m} must satisfy M >= 4·L^(J+1) = {required}")]
    GeometryGuard { m: usize, required: usize },

    /// Two objects live on different geometries.
    #[error("geometry mismatch: {0}")]
    ShapeMismatch(String),

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error(
        "quadrature did not converge: achieved {achieved:.3e}, target {target:.3e} \
         with {nodes} nodes"
    )]
    QuadratureNonConvergence {
        achieved: f64,
        target: f64,
        nodes: usize,
    },

    /// A decomposition failed one of its contract invariants.
    #[error("contract violation in {invariant} at scale {scale}: {detail}")]
    ContractViolation {
        invariant: &'static str,
        scale: usize,
        detail: String,
    },

    /// A kernel offered for sampling has a materially negative multiplier.
    #[error("kernel is not positive semidefinite: min multiplier {min:.3e} vs max {max:.3e}")]
    NotPositiveDefinite { min: f64, max: f64 },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code classification used by the command-line front end:
    /// 2 for configuration/domain errors, 1 for violated invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::GeometryGuard { .. }
            | Error::ShapeMismatch(_)
            | Error::Manifest(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::QuadratureNonConvergence { .. }
            | Error::ContractViolation { .. }
            | Error::NotPositiveDefinite { .. } => 1,
        }
    }
}
