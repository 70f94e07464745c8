use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: field `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value during {stage}: {detail}")]
    NonFinite { stage: String, detail: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("augmentation error: {0}")]
    Augment(String),

    #[error("missing reference for figure ids: {0:?}")]
    MissingReference(Vec<String>),

    #[error("incomparable reports: {0}")]
    Incomparable(String),

    #[error("output directory is locked: {0}")]
    Locked(PathBuf),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Schema { .. } => "schema",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::DimensionMismatch { .. } => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::Empty(_) => "empty",
            Error::Vocab(_) => "vocab",
            Error::SchemeMismatch(_) => "scheme_mismatch",
            Error::Augment(_) => "augment",
            Error::MissingReference(_) => "missing_reference",
            Error::Incomparable(_) => "incomparable",
            Error::Locked(_) => "locked",
            Error::Stage { source, .. } => source.kind(),
        }
    }
}
