use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    MalformedLine { line: usize, found: usize },
    #[error("line {line}: empty field")]
    EmptyField { line: usize },
    #[error("{kind} id {id} out of range (count {count})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        count: usize,
    },
    #[error("graph has no entities")]
    EmptyGraph,
    #[error("entity {0} has no incident triples")]
    IsolatedEntity(usize),
    #[error("no valid negative found after {0} draws")]
    CorruptionExhausted(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("attention row {0} has no allowed entries")]
    AllMaskedRow(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
