use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The job or report does not match the schema; `pointer` locates the
    /// offending field as a JSON pointer.
    #[error("schema violation at '{pointer}': {message}")]
    Schema { pointer: String, message: String },

    #[error("{0}")]
    Resource(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{0}")]
    Compute(String),

    #[error("{} verification check(s) failed: {}", .0.len(), .0.join(", "))]
    Verify(Vec<String>),
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'static str,
    exit_code: i32,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pointer: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed: Option<&'a [String]>,
}

impl CliError {
    pub fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// Wraps a core error raised while handling the field at `pointer`.
    pub fn at(pointer: &str, err: mflo_core::Error) -> Self {
        match err {
            mflo_core::Error::Argument(m) => Self::schema(pointer, m),
            other => other.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Verify(_) => 1,
            Self::Schema { .. } | Self::Io { .. } | Self::Compute(_) => 2,
            Self::Resource(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Schema { .. } => "schema",
            Self::Resource(_) => "resource",
            Self::Io { .. } => "io",
            Self::Compute(_) => "compute",
            Self::Verify(_) => "verify",
        }
    }

    pub fn to_json(&self) -> String {
        let e = ErrorJson {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            pointer: match self {
                Self::Schema { pointer, .. } => Some(pointer),
                _ => None,
            },
            failed: match self {
                Self::Verify(f) => Some(f),
                _ => None,
            },
        };
        serde_json::to_string(&e).expect("error serializes")
    }
}

impl From<mflo_core::Error> for CliError {
    fn from(err: mflo_core::Error) -> Self {
        match err {
            mflo_core::Error::Argument(m) => Self::schema("", m),
            e @ mflo_core::Error::Resource { .. } => Self::Resource(e.to_string()),
            e => Self::Compute(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
