use thiserror::Error;

/// Errors raised by model construction and the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid probability {value} for {what}")]
    InvalidProbability { what: &'static str, value: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("backward induction requires an unconstrained model ({0} constraint(s) present)")]
    ConstrainedModel(usize),

    #[error("KKT system is singular (pivot {pivot:.3e} at row {row}); the equality matrix is rank deficient")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("subgradient direction vanished (norm {0:.3e})")]
    ZeroDirection(f64),

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("model generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, MdpError>;
