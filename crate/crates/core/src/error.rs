use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its valid domain.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// A ratio whose denominator vanished (zero yield or zero gain).
    #[error("undefined rate: {0} has a vanishing denominator")]
    UndefinedRate(&'static str),

    /// The optimized key rate does not change sign over the loss bracket.
    #[error(
        "no sign change in optimized key rate over [{lo_db} dB, {hi_db} dB]: \
         skr(lo) = {skr_lo:e}, skr(hi) = {skr_hi:e}"
    )]
    NoSignChange {
        lo_db: f64,
        hi_db: f64,
        skr_lo: f64,
        skr_hi: f64,
    },

    /// A sifting query that cannot occur in the protocol.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("too few samples: {got} pulses requested, at least {min} required")]
    TooFewSamples { got: u64, min: u64 },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
