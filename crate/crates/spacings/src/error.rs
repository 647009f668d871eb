//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by spacings statistics, calibration and the Monte-Carlo
/// harness.
#[derive(Debug, Clone, Error)]
pub enum SpacingsError {
    /// An argument was outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature did not stabilise under refinement. Both estimates are
    /// carried so the caller can judge the discrepancy.
    #[error("accuracy error in {context}: estimates {coarse} vs {fine} disagree beyond tolerance")]
    Accuracy {
        context: String,
        coarse: f64,
        fine: f64,
    },

    /// The convex function violates a requirement (e.g. non-positive
    /// curvature moment) for the requested operation.
    #[error("invalid phi function: {0}")]
    InvalidPhi(String),

    /// The convex function is outside the supported set for this code path.
    #[error("unsupported phi function: {0}")]
    UnsupportedPhi(String),

    /// Parameter vector outside the model's parameter space.
    #[error("parameter domain error: {0}")]
    ParameterDomain(String),

    /// The model does not provide the requested capability.
    #[error("capability error: {0}")]
    Capability(String),

    /// Invalid configuration of a statistic or experiment.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Every optimizer start failed to converge.
    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    /// The optimizer hit its evaluation cap. Best-so-far point and value are
    /// carried.
    #[error("optimizer did not converge after {evaluations} evaluations (best value {best_value})")]
    NonConvergence {
        evaluations: usize,
        best_point: Vec<f64>,
        best_value: f64,
    },

    /// An internal identity that must hold numerically was violated.
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    /// Affine constraint is rank-deficient or infeasible.
    #[error("constraint error: {0}")]
    Constraint(String),

    /// Fisher information is numerically singular or indefinite.
    #[error("information singular: {0}")]
    InformationSingular(String),

    /// Point configuration admits no nearest-neighbour geometry.
    #[error("degenerate geometry: duplicate points at indices {0} and {1}")]
    DegenerateGeometry(usize, usize),

    /// Requested dimension has no exact geometry path.
    #[error("unsupported dimension {0}: {1}")]
    UnsupportedDimension(usize, String),

    /// Input data is unusable for the requested statistic.
    #[error("model error: {0}")]
    Model(String),

    /// Too many replicates failed inside a Monte-Carlo experiment.
    #[error("harness error: {0}")]
    Harness(String),
}

pub type Result<T> = std::result::Result<T, SpacingsError>;
