use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: non-numeric value `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: label `{value}` is not one of 0, 1, active, bankrupt")]
    BadLabel { row: usize, value: String },

    #[error("row {row}: period `{value}` is not of the form YYYY-Qn")]
    BadPeriod { row: usize, value: String },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("non-finite input value")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("single-class data: {0}")]
    SingleClass(String),

    #[error("singular Hessian after {iterations} iterations; set ridge > 0 to regularize")]
    SingularHessian { iterations: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model has no probability calibration; fit Platt scaling first")]
    NotCalibrated,

    #[error("unknown name: {0}")]
    Unknown(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
