//! Covariance tensor fields of probability distributions on the model
//! Riemannian manifolds ℝⁿ, S² and H², similarity invariants of the
//! covariance operator field, and recovery of a distribution from observed
//! covariance tensors by convex optimization over the probability simplex.

pub mod error;
pub mod manifold;
pub mod geodesic;
pub mod tensor;
pub mod spd;
pub mod field;
pub mod sample;
pub mod recovery;
pub mod experiment;
pub mod io;

pub use error::{CovfieldError, Result};
pub use field::{
    covariance_at, intrinsic_mean, operator_quadratic_form, optimal_amplitude, trace_field,
    z_tensor, AmplitudeFn, CovarianceTensor, Pmf,
};
pub use recovery::{
    build_y_matrix, forward_covariance_set, project_simplex, rank_diagnostic, recover_pmf,
    CovarianceSet, ObservationSet, RecoveryOutcome, RecoveryProblem, SolverOptions, YMatrix,
};
pub use manifold::{
    distance, exp, exp_wrapped, log, log_lenient, metric_at, Chart, Manifold, ManifoldPoint,
    TangentVector,
};
pub use geodesic::geodesic_ode;
pub use spd::{invariant, numerical_rank, whiten_log, InvariantKind, SpdMatrix};
pub use tensor::{
    transform_contravariant, transform_metric, transform_operator, transform_vector, ChartJacobian,
};
