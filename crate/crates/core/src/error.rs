use thiserror::Error;

/// Unified error type for the core library.
///
/// Variants are split along the CLI exit-code contract: configuration
/// problems (bad parameters, malformed tables) versus capability problems
/// (an instruction or size a backend cannot handle).
#[derive(Debug, Error, PartialEq)]
pub enum Error {
    #[error("spin index {index} out of range for {n} spins")]
    SpinIndexOutOfRange { index: u32, n: u32 },

    #[error("{gate} requires target index k >= {min}, got k = {k}")]
    CompressionIndexTooLow { gate: &'static str, k: u32, min: u32 },

    #[error("bias {value} outside [-1, 1]")]
    BiasOutOfRange { value: f64 },

    #[error("duration must be non-negative, got {value}")]
    NegativeDuration { value: f64 },

    #[error("{name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("equilibrium bias must lie in (0, 1), got {value}")]
    InvalidEquilibriumBias { value: f64 },

    #[error("spin count {n} invalid: {reason}")]
    InvalidSpinCount { n: u32, reason: &'static str },

    #[error("reset spin count must be 1 or 2, got {count}")]
    InvalidResetCount { count: u32 },

    #[error("m table has no entry for level {k} (n = {n})")]
    MissingMTableEntry { n: u32, k: u32 },

    #[error("delta must lie in (0, 1), got {value}")]
    InvalidDelta { value: f64 },

    #[error("bias goal for bit {k} unreachable within {bound} iterations (n = {n})")]
    GoalUnreachable { n: u32, k: u32, bound: u32 },

    #[error("bonacci order must be 2, 3 or 4, got {order}")]
    InvalidOrder { order: u32 },

    #[error("instruction {instr} not supported by the {backend} backend")]
    UnsupportedInstruction { instr: String, backend: &'static str },

    #[error("oracle backend capped at {cap} spins, got n = {n}")]
    OracleCapExceeded { n: u32, cap: u32 },

    #[error("algorithm {algo} not supported here: {reason}")]
    UnsupportedAlgorithm { algo: String, reason: &'static str },

    #[error("sweep grid invalid: {reason}")]
    InvalidSweepGrid { reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// True for errors that mean "this backend cannot do that" rather than
    /// "the request itself is malformed". The CLI maps these to exit code 3.
    pub fn is_capability(&self) -> bool {
        matches!(
            self,
            Error::UnsupportedInstruction { .. }
                | Error::OracleCapExceeded { .. }
                | Error::UnsupportedAlgorithm { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
