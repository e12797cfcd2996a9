use alloc::string::String;
use core::fmt;

/// Input validation failures raised by the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A label is not below the configured number of classes.
    LabelOutOfRange { label: usize, num_classes: usize },
    /// A patch does not fit inside the image.
    PatchOutOfBounds { row: usize, col: usize, side: usize },
    /// Buffers or masks disagree on dimensions.
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    /// Any other contract violation.
    InvalidInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            Error::PatchOutOfBounds { row, col, side } => {
                write!(f, "patch of side {side} at ({row}, {col}) exceeds image bounds")
            }
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

/// Failures reported by a detector oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// The request never produced a response.
    Transport(String),
    /// The response could not be decoded or lacks required fields.
    Malformed(String),
    /// The peer speaks another protocol version.
    ProtocolVersion { expected: u32, found: u32 },
    /// The response decoded but violates detection invariants.
    Validation(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Transport(msg) => write!(f, "transport failure: {msg}"),
            OracleError::Malformed(msg) => write!(f, "malformed response: {msg}"),
            OracleError::ProtocolVersion { expected, found } => {
                write!(f, "protocol version mismatch: expected {expected}, found {found}")
            }
            OracleError::Validation(msg) => write!(f, "invalid detection: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OracleError {}
