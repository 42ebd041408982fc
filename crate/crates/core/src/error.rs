use std::path::PathBuf;

use crate::provider::ProviderFault;
use crate::sandbox::DesignFault;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller violated a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A persisted record could not be loaded.
    #[error("archive record {design_id}: {detail}")]
    Record { design_id: String, detail: String },

    #[error(transparent)]
    Provider(#[from] ProviderFault),

    #[error(transparent)]
    Design(#[from] Box<DesignFault>),

    #[error("plan fault: {0}")]
    Plan(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used on CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Record { .. } => "record",
            Error::Provider(_) => "provider",
            Error::Design(_) => "design",
            Error::Plan(_) => "plan",
            Error::Json(_) => "json",
        }
    }
}

impl From<DesignFault> for Error {
    fn from(fault: DesignFault) -> Self {
        Error::Design(Box::new(fault))
    }
}
