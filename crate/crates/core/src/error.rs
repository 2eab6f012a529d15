use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid network shape: {0}")]
    InvalidShape(String),

    #[error("parameter vector has length {got}, shape requires {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("input point has dimension {got}, network expects {expected}")]
    InputDimension { expected: usize, got: usize },

    #[error("hidden index {index} out of range for width {hidden}")]
    HiddenIndex { index: usize, hidden: usize },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("smoothing index must be >= 1")]
    InvalidSmoothIndex,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid breakpoints: {0}")]
    InvalidBreakpoints(String),

    #[error("invalid quadrature resolution {0} (need >= 2)")]
    InvalidResolution(usize),

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("schedule rejected: {0}")]
    ScheduleRejected(String),

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("Lyapunov value increased at step {step}: {before} -> {after}")]
    LyapunovIncrease { step: usize, before: f64, after: f64 },

    #[error("parameter norm {norm} exceeds cap {cap} at step {step}")]
    NormCap { step: usize, norm: f64, cap: f64 },
}

pub type Result<T> = std::result::Result<T, LabError>;
