use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors surfaced by the core pipeline. Every variant formats as a single line.
#[derive(Debug, Clone, PartialEq)]
pub enum DscError {
    /// Tensor shapes do not satisfy an operation's contract.
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// A model's layer chain produced spatial dims that do not match the
    /// following stage. Names the offending unit and both shapes.
    ShapeChain {
        unit: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A layer or loss produced NaN/Inf, which violates the engine contract.
    NonFinite { context: String },
    /// A return mask held a value other than 0 or 1.
    BadMask { context: &'static str },
    /// An input map did not cover a configured sensor branch.
    MissingSensor { sensor: String },
    /// Depth metrics were requested over an empty evaluation set.
    EmptyEvaluation,
    /// Structured-text configuration could not be parsed.
    Config { line: usize, message: String },
    /// Invalid LIDAR geometry or PCDM contents.
    Geometry { message: String },
    /// Catch-all contract violation.
    Invalid { message: String },
}

impl fmt::Display for DscError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DscError::ShapeMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: shape mismatch, expected {expected:?}, got {got:?}"),
            DscError::ShapeChain {
                unit,
                expected,
                got,
            } => write!(
                f,
                "shape chain broken at {unit}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            DscError::NonFinite { context } => {
                write!(f, "{context}: non-finite value produced")
            }
            DscError::BadMask { context } => {
                write!(f, "{context}: mask values must be exactly 0 or 1")
            }
            DscError::MissingSensor { sensor } => {
                write!(f, "missing input for sensor '{sensor}'")
            }
            DscError::EmptyEvaluation => write!(f, "empty evaluation set"),
            DscError::Config { line, message } => {
                write!(f, "config line {line}: {message}")
            }
            DscError::Geometry { message } => write!(f, "geometry: {message}"),
            DscError::Invalid { message } => write!(f, "{message}"),
        }
    }
}

impl core::error::Error for DscError {}
