//! Core of the rekindle intervention engine.
//!
//! A writing session streams [`InteractionEvent`]s into a per-session
//! [`DetectorState`]. When the worker goes quiet for the idle threshold the
//! detector raises a [`Signal`], the [`Dispatcher`] turns it into a
//! notification (a generated continuation of the document, or an encouraging
//! message in the control condition), and the whole exchange is written to an
//! append-only JSONL log from which [`metrics`] recomputes the behavioral
//! measures.
//!
//! All timestamps are session-relative milliseconds ([`Millis`]).

pub mod clock;
pub mod config;
pub mod detector;
pub mod dispatcher;
pub mod document;
pub mod episode;
pub mod event;
pub mod generation;
pub mod log;
pub mod mail;
pub mod metrics;

/// Milliseconds since the start of a session (or of a clock, for [`clock`]).
pub type Millis = u64;

pub use clock::{Clock, SystemClock, TimerId, TimerQueue, VirtualClock};
pub use config::{Condition, ConfigError, SessionConfig};
pub use detector::{DetectorError, DetectorState, Phase, Signal, SignalKind};
pub use dispatcher::{AwayEmail, Dispatcher, DispatcherConfig, Effect, NotificationPayload};
pub use document::{DocKind, DocumentError, DocumentUpdate, Slide, WorkDocument};
pub use episode::{EpisodeId, InterventionEpisode, Notification, PayloadKind};
pub use event::{EventError, EventKind, InteractionEvent, SessionId};
pub use generation::{Continuation, ContinuationBody, GenerationError, Generator};
pub use metrics::{MetricsError, MetricsReport};
