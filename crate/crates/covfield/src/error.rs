use thiserror::Error;

/// Errors raised by geometry, field evaluation, and recovery routines.
#[derive(Debug, Error)]
pub enum CovfieldError {
    #[error("tangent vector is based at a different point than the map argument")]
    MismatchedBase,

    #[error("operands live on different manifolds")]
    ManifoldMismatch,

    #[error("coordinates violate the {manifold} constraint (defect {defect:.3e})")]
    InvalidPoint { manifold: String, defect: f64 },

    #[error("vector is not tangent at its base point (defect {defect:.3e})")]
    NotTangent { defect: f64 },

    #[error("cut locus reached: {0}")]
    CutLocus(String),

    #[error("geodesic left the valid chart region at step {step}")]
    ChartOverflow { step: usize },

    #[error("chart frame is degenerate (gram determinant {det:.3e})")]
    DegenerateFrame { det: f64 },

    #[error("jacobian is numerically singular (condition estimate {cond:.3e})")]
    SingularJacobian { cond: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CovfieldError>;
