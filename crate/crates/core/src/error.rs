use crate::numeric::NumericError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ontology: duplicate event type `{type_id}`")]
    DuplicateType { type_id: String },
    #[error("ontology: type `{type_id}`: {detail}")]
    SlotMismatch { type_id: String, detail: String },
    #[error("ontology: malformed file: {0}")]
    MalformedOntology(String),
    #[error("unknown event type `{0}`")]
    UnknownEventType(String),
    #[error("{path}:{line}: {detail}")]
    Data {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("invalid instance: {0}")]
    Validation(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
