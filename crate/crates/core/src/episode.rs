use serde::{Deserialize, Serialize};

use crate::event::SessionId;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpisodeId(pub String);

impl EpisodeId {
    /// Episodes are numbered from 1 in detection order within a session.
    pub fn nth(session: &SessionId, n: u64) -> Self {
        Self(format!("{session}-e{n}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for EpisodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Continuation,
    Encouragement,
    AwayEmail,
}

/// One in-page prompt shown to the worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub at: Millis,
    pub payload_kind: PayloadKind,
    pub headline: String,
}

/// A detection, the prompts that followed it, and the worker's return.
///
/// `notifications` holds in-page prompts only; away emails are tracked by the
/// dispatcher's email records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionEpisode {
    pub episode_id: EpisodeId,
    pub detected_at: Millis,
    pub notifications: Vec<Notification>,
    pub resumed_at: Option<Millis>,
    pub continuation_ref: Option<String>,
    /// Set when a continuation was expected but an encouragement was shown.
    #[serde(default)]
    pub fallback: bool,
}

impl InterventionEpisode {
    pub fn open(episode_id: EpisodeId, detected_at: Millis) -> Self {
        Self {
            episode_id,
            detected_at,
            notifications: Vec::new(),
            resumed_at: None,
            continuation_ref: None,
            fallback: false,
        }
    }

    pub fn first_notification_at(&self) -> Option<Millis> {
        self.notifications.first().map(|n| n.at)
    }

    pub fn is_open(&self) -> bool {
        self.resumed_at.is_none()
    }
}
