use thiserror::Error;

/// Errors raised by the field, flow, certification, minimizer-set and
/// distance-field operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),

    #[error("unknown catalogue name `{0}`")]
    UnknownCatalogueName(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("field `{0}` has no analytic derivative to validate")]
    NoAnalyticDerivative(String),

    #[error("syntax error at position {position}: {message}")]
    SyntaxError { position: usize, message: String },

    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("variable x{index} out of range 1..={dim} at position {position}")]
    VariableOutOfRange {
        index: usize,
        dim: usize,
        position: usize,
    },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("flow value increased from {before} to {after} at t = {t}")]
    NonMonotoneFlow { t: f64, before: f64, after: f64 },

    #[error("flow did not converge: stopped by {reason} with gradient norm {grad_norm}")]
    NotConverged { reason: String, grad_norm: f64 },

    #[error("no basin witness found around the minimizer")]
    NoWitnessFound,

    #[error("every sampled point lies in the minimizing set (region inside argmin)")]
    AllPointsSkipped,

    #[error("claimed infimum {inf_f} exceeds sampled value {value}")]
    InfBelowSamples { inf_f: f64, value: f64 },

    #[error("argmin model is empty")]
    EmptyArgminModel,

    #[error("no start converged to a minimizer")]
    NoMinimizerFound,

    #[error("no radius found on which the Hessian stays within the allowed variation")]
    RadiusNotFound,

    #[error("Hessian kernel is empty: the chart is the point itself")]
    KernelEmpty,

    #[error("projection is not unique at the requested point")]
    NonUniqueProjection,

    #[error("region sampling failed: {0}")]
    Sampling(String),
}

pub type Result<T> = std::result::Result<T, Error>;
