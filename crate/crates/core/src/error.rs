use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("duplicate parcel ids: {}", .0.join(", "))]
    DuplicatePid(Vec<String>),

    #[error("duplicate inspection for parcel `{0}`")]
    DuplicateInspection(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidSpec(String),

    #[error("labels contain a single class; metric or model undefined")]
    SingleClass,

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("leakage detected: {0}")]
    Leakage(String),

    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
