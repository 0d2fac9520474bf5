//! Append-only JSONL session log.
//!
//! Every line is one JSON object. Interaction events are written exactly in
//! their wire shape (`session_id`, `at`, `kind`, `chars_delta`); every other
//! record carries one distinguishing key (`signal_kind`, `notification`,
//! `session_opened`, ...). Document text and generated headlines are only
//! written when the session retains content.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SessionConfig;
use crate::detector::SignalKind;
use crate::document::{DocKind, WorkDocument};
use crate::episode::{EpisodeId, InterventionEpisode, Notification, PayloadKind};
use crate::event::{InteractionEvent, SessionId};
use crate::mail::DeliveryRecord;
use crate::metrics::ConfigTimeline;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Event(InteractionEvent),
    Signal(SignalRecord),
    Notification(NotificationRecord),
    Opened(OpenedRecord),
    Closed(ClosedRecord),
    Threshold(ThresholdRecord),
    Document(DocumentRecord),
    Email(EmailRecord),
    Generation(GenerationRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalRecord {
    pub at: Millis,
    pub signal_kind: SignalKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotificationRecord {
    pub at: Millis,
    pub notification: NotificationEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotificationEntry {
    pub episode_id: EpisodeId,
    pub payload_kind: PayloadKind,
    /// Present only when the session retains content.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headline: Option<String>,
    pub headline_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation_ref: Option<String>,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenedRecord {
    pub session_opened: SessionMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionMeta {
    pub session_id: SessionId,
    pub config: SessionConfig,
    pub doc_kind: DocKind,
    /// Clock reading at session start; `at` values are relative to it.
    pub started_at: Millis,
    pub wall_anchor_unix_ms: u64,
    pub has_recipient: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedRecord {
    pub at: Millis,
    pub session_closed: CloseSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloseSummary {
    pub accepted_events: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRecord {
    pub at: Millis,
    pub idle_threshold_t: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub at: Millis,
    pub document: DocumentSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentSummary {
    pub doc_kind: DocKind,
    pub chars: usize,
    pub slides: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<WorkDocument>,
}

impl DocumentSummary {
    /// Sizes of `doc`, with its content only when `retain` is set.
    pub fn of(doc: &WorkDocument, retain: bool) -> Self {
        Self {
            doc_kind: doc.kind(),
            chars: doc.char_len(),
            slides: doc.slide_count(),
            content: retain.then(|| doc.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmailRecord {
    pub at: Millis,
    pub email: EmailEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmailEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_id: Option<EpisodeId>,
    pub payload_kind: PayloadKind,
    pub delivery: DeliveryRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub at: Millis,
    pub generation: GenerationEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationOutcome {
    Ok,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationEntry {
    pub outcome: GenerationOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation_ref: Option<String>,
    pub latency_ms: Millis,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// Buffered JSONL appender.
pub struct JsonlWriter<W: Write> {
    inner: BufWriter<W>,
}

impl JsonlWriter<File> {
    pub fn append_to(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::new(file))
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner: BufWriter::new(inner),
        }
    }

    pub fn append(&mut self, record: &LogRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.inner, record)?;
        self.inner.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }

    pub fn into_inner(self) -> io::Result<W> {
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

/// A parsed session log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionLog {
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn read(path: &Path) -> Result<Self, LogError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line)
                .map_err(|source| LogError::Parse { line: i + 1, source })?;
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn meta(&self) -> Option<&SessionMeta> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Opened(o) => Some(&o.session_opened),
            _ => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &InteractionEvent> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn ended_at(&self) -> Option<Millis> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Closed(c) => Some(c.at),
            _ => None,
        })
    }

    pub fn timeline(&self) -> Option<ConfigTimeline> {
        let meta = self.meta()?;
        let mut timeline = ConfigTimeline::new(meta.config.clone());
        for r in &self.records {
            if let LogRecord::Threshold(t) = r {
                timeline.push_threshold(t.at, t.idle_threshold_t);
            }
        }
        Some(timeline)
    }

    /// Rebuilds episodes from signal and notification records. Headlines are
    /// empty when the session did not retain content.
    pub fn episodes(&self) -> Vec<InterventionEpisode> {
        let Some(meta) = self.meta() else {
            return Vec::new();
        };
        let mut episodes: Vec<InterventionEpisode> = Vec::new();
        let mut open = false;
        for r in &self.records {
            match r {
                LogRecord::Signal(s) => match s.signal_kind {
                    SignalKind::InterruptionDetected => {
                        let id = EpisodeId::nth(&meta.session_id, episodes.len() as u64 + 1);
                        episodes.push(InterventionEpisode::open(id, s.at));
                        open = true;
                    }
                    SignalKind::Resumed if open => {
                        if let Some(ep) = episodes.last_mut() {
                            ep.resumed_at = Some(s.at);
                        }
                        open = false;
                    }
                    _ => {}
                },
                LogRecord::Notification(n) => {
                    let entry = &n.notification;
                    if let Some(ep) = episodes
                        .iter_mut()
                        .rev()
                        .find(|e| e.episode_id == entry.episode_id)
                    {
                        ep.notifications.push(Notification {
                            at: n.at,
                            payload_kind: entry.payload_kind,
                            headline: entry.headline.clone().unwrap_or_default(),
                        });
                        if entry.continuation_ref.is_some() {
                            ep.continuation_ref = entry.continuation_ref.clone();
                        }
                        ep.fallback |= entry.fallback;
                    }
                }
                _ => {}
            }
        }
        episodes
    }
}
