//! Network front end for rekindle sessions.
//!
//! [`Service`] owns the session registry and is usable directly from Rust
//! (the simulator drives it that way). [`http::router`] exposes the same
//! operations as JSON over HTTP plus one WebSocket stream per session.

mod error;
pub mod http;
pub mod messages;
mod runtime;
mod service;

pub use error::ServiceError;
pub use messages::{
    Ack, ClientMessage, CreateSessionRequest, CreateSessionResponse, DocumentBody, ServerMessage,
    ThresholdRequest,
};
pub use service::{
    CountingGenerator, Service, ServiceClock, ServiceOptions, StreamHandle, DEFAULT_DISCONNECT_GRACE,
    SESSIONS_DIR,
};
