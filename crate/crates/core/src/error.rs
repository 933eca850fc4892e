//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by corpus handling, the LLM gateway, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate doc_id `{0}`")]
    DuplicateDocId(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("template `{template_id}`: placeholder `{placeholder}` is not bound")]
    UnboundPlaceholder {
        template_id: String,
        placeholder: String,
    },

    #[error("template `{template_id}`: response failed schema validation after {attempts} attempts: {reason}")]
    SchemaValidation {
        template_id: String,
        attempts: u32,
        reason: String,
        /// Raw text of the final (still invalid) response.
        raw: String,
    },

    #[error("no mock fixture matches template `{template_id}` (attempt {attempt})")]
    FixtureMissing { template_id: String, attempt: u32 },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("embedding service error ({retriever_id}): {message}")]
    Embedding {
        retriever_id: String,
        message: String,
    },

    #[error("search client error: {0}")]
    Search(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True when the failure is transient and the call may be retried.
    pub fn is_transient(&self) -> bool {
        matches!(self, Error::Provider(_) | Error::Search(_) | Error::Embedding { .. })
    }
}
