use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QkdError {
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),

    #[error("the (d+1)-basis family requires a prime dimension, got d = {0}")]
    NonPrimeDimension(usize),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("{name} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("incomplete statistics: {0}")]
    IncompleteStatistics(String),

    #[error("reconstructed Bell spectrum has a negative entry {value} at ({j}, {k})")]
    NegativeSpectrum { j: usize, k: usize, value: f64 },

    #[error("no sign change of the key rate on [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("no estimation samples (m = 0)")]
    DegenerateSample,

    #[error("fluctuation {xi} saturates the error estimate")]
    SaturatedStatistics { xi: f64 },

    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),

    #[error("dimension {0} is too large for exact projection (max {1})")]
    DimensionTooLarge(usize, usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, QkdError>;
