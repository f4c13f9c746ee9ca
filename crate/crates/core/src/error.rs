use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network validation failed:\n{0}")]
    InvalidNetwork(ValidationReport),

    #[error("noisy-or requires a binary child, `{0}` is not binary")]
    NoisyOrOnNonBinaryChild(String),

    #[error("variable `{0}` is not in the factor scope")]
    VarNotInScope(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid factor: {0}")]
    InvalidFactor(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("value `{value}` is not in the domain of `{variable}`")]
    UnknownValue { variable: String, value: String },

    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),

    #[error("evidence is inconsistent: normalization constant is zero")]
    InconsistentEvidence,

    #[error("no training data")]
    EmptyData,

    #[error("variable `{0}` must be binary for this model")]
    NonBinaryChild(String),

    #[error("optimization diverged while fitting `{0}`")]
    Divergence(String),

    #[error("labels contain a single class")]
    SingleClassLabels,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("consistency table required for variant `{0}`")]
    MissingCpt(String),

    #[error("mentions labels missing for `{0}`")]
    MissingMentionsLabels(String),

    #[error("all paired differences are zero")]
    AllZeroDifferences,

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("id misalignment: {0}")]
    IdMisalignment(String),

    #[error("row {row}: value `{value}` out of domain for `{variable}`")]
    OutOfDomainValue {
        row: usize,
        variable: String,
        value: String,
    },

    #[error("insufficient data: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("span annotations missing for `{0}`")]
    MissingSpans(String),

    #[error("invalid channel parameters: {0}")]
    InvalidChannelParams(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by numerics rather than inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Divergence(_) | Error::InconsistentEvidence)
    }
}
