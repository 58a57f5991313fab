use std::fmt;

use bankwatch_core::Error;

/// Stable process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Internal = 1,
    Config = 2,
    Data = 3,
    Convergence = 4,
}

impl Failure {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Failure, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Failure::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Failure::Data, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(Failure::Internal, message)
    }

    /// Reclassifies a core error as a configuration problem, e.g. when a
    /// grid or schema file fails to parse.
    pub fn as_config(e: Error) -> Self {
        Self::config(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::InvalidParameter(_) | Error::Unknown(_) | Error::Schema(_) | Error::NotCalibrated => Failure::Config,
            Error::SingularHessian { .. } => Failure::Convergence,
            Error::Io { .. } => Failure::Internal,
            Error::MissingFile(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::MissingColumn(_)
            | Error::NonNumeric { .. }
            | Error::BadLabel { .. }
            | Error::BadPeriod { .. }
            | Error::Dimension { .. }
            | Error::NonFinite
            | Error::InsufficientData(_)
            | Error::SingleClass(_)
            | Error::Degenerate(_) => Failure::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
