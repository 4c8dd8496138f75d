//! Error types shared across the pipeline.

use thiserror::Error;

/// Everything that can go wrong between raw input files and a rendered
/// report. Line numbers are 1-based and count physical lines of the input,
/// header included.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed read code {raw:?}: {reason}")]
    MalformedCode { raw: String, reason: &'static str },

    #[error("line {line}: malformed dictionary row: {reason}")]
    MalformedDictionaryRow { line: u64, reason: String },

    #[error("line {line}: duplicate read code {code:?} in dictionary")]
    DuplicateCode { line: u64, code: String },

    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("no prescriptions match drug code {drug_code:?}")]
    EmptyCohort { drug_code: String },

    #[error("group size {group_size} exceeds cohort size {n_patients}")]
    GroupSizeExceedsCohort {
        group_size: usize,
        n_patients: usize,
    },

    #[error("need at least 2 groups for a t-test, got {n_groups}")]
    InsufficientGroups { n_groups: usize },

    #[error("matrix dimensions do not match: {reason}")]
    DimensionMismatch { reason: String },

    #[error("invalid cohort spec: {reason}")]
    SpecInvalid { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Io(std::io::Error::other(format!("{other:?}"))),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
