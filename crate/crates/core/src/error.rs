use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Rejected configuration or parameter; the message names the violated bound.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kappa = {kappa} outside the allowed range [{min}, {max}] (1 <= kappa <= sqrt(N))")]
    KappaOutOfRange { kappa: f64, min: f64, max: f64 },

    #[error("window [{start}, {end}) out of bounds for trajectory of {len} samples")]
    OutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("unknown {family} strategy `{name}` (known: {known})")]
    UnknownStrategy {
        family: &'static str,
        name: String,
        known: String,
    },

    #[error("fast mode is not available for {0} noise (cycle phases are correlated)")]
    FastModeUnsupported(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimization failed: {0}")]
    Optimization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
