use std::io;

/// Failures surfaced by sessions, the store and the service. Each maps to
/// one machine-readable code in API error bodies.
#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("operation needs a {expected} session")]
    WrongMode { expected: &'static str },
    #[error("{0}")]
    Conflict(String),
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("corrupt session document: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Core(#[from] bayesopt_core::Error),
    #[error("session document: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SessionError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        SessionError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "not_found",
            SessionError::WrongMode { .. } => "wrong_mode",
            SessionError::Conflict(_) => "conflict",
            SessionError::Validation { .. } => "validation",
            SessionError::Schema(_) | SessionError::Corrupt(_) | SessionError::Format(_) => {
                "corrupt_session"
            }
            SessionError::Core(_) | SessionError::Io(_) => "internal",
        }
    }
}

/// Core argument errors on client input become validation errors on `field`.
pub(crate) fn on_field(field: &str) -> impl Fn(bayesopt_core::Error) -> SessionError + '_ {
    move |e| match e {
        bayesopt_core::Error::InvalidArgument(m) => SessionError::validation(field, m),
        bayesopt_core::Error::DimensionMismatch { expected, found } => SessionError::validation(
            field,
            format!("expected {expected} coordinates, got {found}"),
        ),
        other => SessionError::Core(other),
    }
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;
