//! CLI-level errors: every failure maps to a stable category that prints as
//! a single machine-parsable line (`error: <category>: <message>`) with a
//! nonzero exit status.

use std::fmt;

use dsc_core::DscError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Usage,
    Io,
    Config,
    Data,
    Format,
    Shape,
    Sensor,
    Internal,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Io => "io",
            Category::Config => "config",
            Category::Data => "data",
            Category::Format => "format",
            Category::Shape => "shape",
            Category::Sensor => "sensor",
            Category::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        CliError {
            category,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new(Category::Usage, message)
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::new(Category::Io, format!("{context}: {err}"))
    }

    pub fn format(message: impl Into<String>) -> Self {
        CliError::new(Category::Format, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::new(Category::Data, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}: {}", self.category.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DscError> for CliError {
    fn from(e: DscError) -> Self {
        let category = match &e {
            DscError::Config { .. } => Category::Config,
            DscError::MissingSensor { .. } => Category::Sensor,
            DscError::ShapeMismatch { .. } | DscError::ShapeChain { .. } => Category::Shape,
            DscError::Geometry { .. } => Category::Format,
            DscError::BadMask { .. } | DscError::EmptyEvaluation => Category::Data,
            DscError::NonFinite { .. } | DscError::Invalid { .. } => Category::Internal,
        };
        CliError::new(category, e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
