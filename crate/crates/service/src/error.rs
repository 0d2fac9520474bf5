use rekindle_core::log::LogError;
use rekindle_core::{ConfigError, DetectorError, DocumentError, EventError, MetricsError, SessionId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("event for session {found} sent to session {expected}")]
    SessionMismatch { expected: SessionId, found: SessionId },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    InvalidEvent(#[from] EventError),
    #[error(transparent)]
    OutOfOrder(#[from] DetectorError),
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("clock control needs a service started with the virtual clock")]
    VirtualClockRequired,
    #[error("session storage: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ServiceError {
    /// Stable machine-readable code, used in stream error messages.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::SessionMismatch { .. } => "session_mismatch",
            ServiceError::Config(_) => "invalid_config",
            ServiceError::InvalidEvent(_) => "invalid_event",
            ServiceError::OutOfOrder(_) => "out_of_order_event",
            ServiceError::MalformedDocument(_) => "malformed_document",
            ServiceError::Document(_) => "document_rejected",
            ServiceError::VirtualClockRequired => "virtual_clock_required",
            ServiceError::Io(_) | ServiceError::Log(_) | ServiceError::Metrics(_) => "internal",
        }
    }
}
