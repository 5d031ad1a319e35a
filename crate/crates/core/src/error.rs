use thiserror::Error;

/// Errors produced by constructors, parsers and solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Two values that must live over the same carrier do not.
    #[error("carrier mismatch: {0}")]
    CarrierMismatch(String),

    /// A numeric value is outside its admissible range.
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// An evaluation parameter violates its admissible range.
    #[error("parameter out of range: {0}")]
    Parameter(String),

    /// A structural invariant of a parsed or constructed value is violated.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Syntax error in an input document, with position information when the
    /// underlying parser provides it.
    #[error("parse error: {0}")]
    Parse(String),

    /// An instance exceeds the bounds of a brute-force enumeration.
    #[error("instance exceeds brute-force bounds: {0}")]
    TooLarge(String),

    /// A named check or fixture does not exist.
    #[error("unknown name: {0}")]
    Unknown(String),
}
