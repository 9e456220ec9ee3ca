use alloc::string::String;

/// Errors raised by the retrieval core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("stopword list `{0}` is empty")]
    EmptyStopwordList(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("relevance fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("no training signal: no within-query pair with differing grades")]
    NoTrainingSignal,
    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("feature name collision on `{0}`")]
    NameCollision(String),
    #[error("unknown feature `{name}`; schema has: {available}")]
    UnknownFeature { name: String, available: String },
    #[error("item `{0}` is not in the ranked list")]
    ItemNotInList(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("malformed index: {0}")]
    MalformedIndex(String),
}

pub type Result<T> = core::result::Result<T, Error>;
