use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
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
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column '{column}': missing value")]
    MissingValue { row: usize, column: String },
    #[error("label column '{column}' must hold exactly two distinct values, found {found:?}")]
    BadLabels { column: String, found: Vec<String> },
    #[error("label column {0} not found")]
    NoLabelColumn(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("split with train fraction {fraction} of {n} rows leaves an empty side")]
    EmptySplit { n: usize, fraction: f64 },
    #[error("point ({point:?}) lies outside the model domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("kernel weights sum to zero at the query point")]
    ZeroKernelMass,
    #[error("proximity matrix for {n} points exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    /// Short stable identifier, used by the CLI's machine-readable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::NonNumeric { .. } => "non_numeric",
            Error::MissingValue { .. } => "missing_value",
            Error::BadLabels { .. } => "bad_labels",
            Error::NoLabelColumn(_) => "no_label_column",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidData(_) => "invalid_data",
            Error::InvalidParam(_) => "invalid_param",
            Error::EmptySplit { .. } => "empty_split",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::ZeroKernelMass => "zero_kernel_mass",
            Error::TooLarge { .. } => "too_large",
            Error::Empty(_) => "empty",
        }
    }
}
