use thiserror::Error;

/// Coarse failure class, used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad or unusable input data.
    Input,
    /// A numerical precondition failed on otherwise valid data.
    Numerical,
    /// Invalid configuration or parameters.
    Config,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("irregular sampling: {0}")]
    IrregularSampling(String),
    #[error("empty record")]
    EmptyRecord,
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("record too short: {samples} samples for segment length {segment}")]
    RecordTooShort { samples: usize, segment: usize },
    #[error("no spectral peaks found")]
    NoPeaksFound,
    #[error("half-power bandwidth unresolved at bin {0}")]
    BandwidthUnresolved(usize),
    #[error("empty mode set")]
    EmptyModeSet,
    #[error("model assembly conflict: {0}")]
    AssemblyConflict(String),
    #[error("overdamped model: effective damping ratio {0} >= 1")]
    OverdampedModel(f64),
    #[error("mode at {frequency_hz} Hz violates Nyquist for {sample_rate_hz} Hz sampling")]
    NyquistViolation {
        frequency_hz: f64,
        sample_rate_hz: f64,
    },
    #[error("simulated response is identically zero")]
    ZeroSimulation,
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty candidate list")]
    EmptyCandidateList,
    #[error("thresholds must be ascending with at least two entries")]
    UnsortedThresholds,
    #[error("alert profiles use different grids: {0}")]
    GridMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("damping matrix is not proportional (off-diagonal modal term {0:e})")]
    NonProportionalDamping(f64),
    #[error("time step {dt_s} s too large for {f_max_hz} Hz (need dt < 1/(10 f_max))")]
    StepTooLarge { dt_s: f64, f_max_hz: f64 },
    #[error("stiffness matrix is not positive definite")]
    IndefiniteStiffness,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            MalformedInput(_)
            | IrregularSampling(_)
            | EmptyRecord
            | ChannelMismatch { .. }
            | RateMismatch(..)
            | GridMismatch(_) => ErrorCategory::Input,
            InvalidParameter(_) | InvalidConfig(_) | UnsortedThresholds | StepTooLarge { .. } => {
                ErrorCategory::Config
            }
            _ => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
