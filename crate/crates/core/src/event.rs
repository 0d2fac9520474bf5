use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Millis;

/// Opaque session identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Key,
    PointerMove,
    Click,
    Scroll,
    Focus,
    Blur,
    PageHidden,
    PageVisible,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::Key,
        EventKind::PointerMove,
        EventKind::Click,
        EventKind::Scroll,
        EventKind::Focus,
        EventKind::Blur,
        EventKind::PageHidden,
        EventKind::PageVisible,
    ];

    /// Whether the event counts as the worker operating the page. Blur and
    /// PageHidden do not.
    pub fn is_interaction(self) -> bool {
        !matches!(self, EventKind::Blur | EventKind::PageHidden)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("{kind:?} event carries chars_delta {delta}; only key events may")]
    NonKeyDelta { kind: EventKind, delta: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionEvent {
    pub session_id: SessionId,
    pub at: Millis,
    pub kind: EventKind,
    pub chars_delta: i64,
}

impl InteractionEvent {
    pub fn new(session_id: SessionId, at: Millis, kind: EventKind) -> Self {
        Self {
            session_id,
            at,
            kind,
            chars_delta: 0,
        }
    }

    pub fn key(session_id: SessionId, at: Millis, chars_delta: i64) -> Self {
        Self {
            session_id,
            at,
            kind: EventKind::Key,
            chars_delta,
        }
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.kind != EventKind::Key && self.chars_delta != 0 {
            return Err(EventError::NonKeyDelta {
                kind: self.kind,
                delta: self.chars_delta,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        let ev = InteractionEvent::key(SessionId::new("s-1"), 1000, 3);
        let line = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            line,
            r#"{"session_id":"s-1","at":1000,"kind":"key","chars_delta":3}"#
        );
        let pm = InteractionEvent::new(SessionId::new("s-1"), 5, EventKind::PointerMove);
        assert!(serde_json::to_string(&pm).unwrap().contains(r#""kind":"pointer_move""#));
    }

    #[test]
    fn delta_only_on_keys() {
        let mut ev = InteractionEvent::new(SessionId::new("s"), 0, EventKind::Click);
        assert!(ev.validate().is_ok());
        ev.chars_delta = 2;
        assert!(ev.validate().is_err());
    }

    #[test]
    fn interaction_kinds() {
        let interactive: Vec<_> = EventKind::ALL
            .iter()
            .filter(|k| k.is_interaction())
            .collect();
        assert_eq!(interactive.len(), 6);
        assert!(!EventKind::Blur.is_interaction());
        assert!(EventKind::PageVisible.is_interaction());
    }
}
