use alloc::string::String;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("value {value} outside the encodable range for {frac_bits} fractional bits")]
    EncodingRange { value: f64, frac_bits: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("triple {0} was already consumed")]
    TripleReuse(u64),
    #[error("sequence length {len} exceeds the maximum {max}")]
    LengthOverflow { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("model is already merged")]
    AlreadyMerged,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
