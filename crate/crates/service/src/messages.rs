//! Wire shapes shared by the HTTP endpoints and the session stream.

use rekindle_core::{
    ContinuationBody, DocKind, DocumentUpdate, EpisodeId, InteractionEvent, Millis, PayloadKind,
    SessionConfig, SessionId, WorkDocument,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub config: SessionConfig,
    #[serde(default = "default_doc_kind")]
    pub doc_kind: DocKind,
    #[serde(default)]
    pub recipient: Option<String>,
}

fn default_doc_kind() -> DocKind {
    DocKind::Text
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: SessionId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdRequest {
    pub idle_threshold_t: i64,
}

/// A full document or a patch against the server's copy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocumentBody {
    Full(WorkDocument),
    Patch(DocumentUpdate),
}

impl From<DocumentBody> for DocumentUpdate {
    fn from(body: DocumentBody) -> Self {
        match body {
            DocumentBody::Full(doc) => DocumentUpdate::Replace(doc),
            DocumentBody::Patch(update) => update,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// The acknowledged event's own timestamp.
    pub at: Millis,
    /// Session time at which the server accepted it.
    pub server_received_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Notification {
        at: Millis,
        headline: String,
        payload_kind: PayloadKind,
        episode_id: EpisodeId,
    },
    /// Full generated content behind the latest notification.
    Continuation {
        episode_id: EpisodeId,
        continuation_ref: String,
        body: ContinuationBody,
    },
    /// Proposed change to the worker's document; the server copy is untouched
    /// until the client sends it back.
    Patch {
        episode_id: EpisodeId,
        update: DocumentUpdate,
    },
    Ack(Ack),
    Error { code: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Event(InteractionEvent),
}
