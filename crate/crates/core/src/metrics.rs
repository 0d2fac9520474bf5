//! Behavioral measures computed from session logs.
//!
//! * interest retrieval time: first notification of an episode to the
//!   worker's next interaction;
//! * ignorance: each notification is `worked` when the worker came back before
//!   the next one, otherwise `ignored`;
//! * progress after resumption: characters typed (positive deltas only) in the
//!   progress window that starts at resumption;
//! * total task time: session end minus session start.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Condition, SessionConfig};
use crate::episode::InterventionEpisode;
use crate::event::{EventKind, InteractionEvent, SessionId};
use crate::log::SessionLog;
use crate::Millis;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("session has not ended")]
    SessionNotEnded,
    #[error("no input values")]
    EmptyInput,
    #[error("log has no session header")]
    MissingHeader,
    #[error("csv export: {0}")]
    Csv(#[from] csv::Error),
}

/// Threshold history of a session, for rules that depend on the threshold in
/// force at a given time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigTimeline {
    initial: SessionConfig,
    thresholds: Vec<(Millis, i64)>,
}

impl ConfigTimeline {
    pub fn new(initial: SessionConfig) -> Self {
        Self {
            initial,
            thresholds: Vec::new(),
        }
    }

    pub fn push_threshold(&mut self, at: Millis, secs: i64) {
        self.thresholds.push((at, secs));
    }

    pub fn config_at(&self, at: Millis) -> SessionConfig {
        let mut cfg = self.initial.clone();
        if let Some(&(_, secs)) = self.thresholds.iter().rev().find(|(t, _)| *t <= at) {
            cfg.idle_threshold_t = secs;
        }
        cfg
    }

    pub fn threshold_ms_at(&self, at: Millis) -> Millis {
        self.config_at(at).threshold_ms()
    }

    pub fn progress_window_ms_at(&self, at: Millis) -> Millis {
        self.config_at(at).progress_window_ms()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Worked,
    Ignored,
    /// Unanswered at session end, but for less than the threshold.
    Pending,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IgnoranceCounts {
    pub ignored: u64,
    pub worked: u64,
    /// Excluded dangling notifications; `ignored + worked + pending` equals
    /// the number of notifications.
    pub pending: u64,
}

impl IgnoranceCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Worked => self.worked += 1,
            Verdict::Ignored => self.ignored += 1,
            Verdict::Pending => self.pending += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.ignored + self.worked + self.pending
    }

    pub fn rate(&self) -> Option<f64> {
        let classified = self.ignored + self.worked;
        (classified > 0).then(|| self.ignored as f64 / classified as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ignorance {
    pub all: IgnoranceCounts,
    pub first_only: IgnoranceCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub session_id: SessionId,
    pub condition: Condition,
    pub n_episodes: usize,
    pub n_notifications: usize,
    pub interest_retrieval_times: Vec<Millis>,
    pub ignorance: Ignorance,
    pub progress_after_resumption: Vec<u64>,
    /// Net character change over the same windows, deletions included.
    pub progress_net: Vec<i64>,
    pub total_task_time: Millis,
}

pub fn interest_retrieval_time(episode: &InterventionEpisode) -> Option<Millis> {
    let first = episode.first_notification_at()?;
    episode.resumed_at.map(|r| r.saturating_sub(first))
}

/// Verdict for each notification of `episode`. `session_end` is `None` for a
/// live session.
pub fn classify_notifications(
    episode: &InterventionEpisode,
    timeline: &ConfigTimeline,
    session_end: Option<Millis>,
) -> Vec<Verdict> {
    let notes = &episode.notifications;
    notes
        .iter()
        .enumerate()
        .map(|(i, n)| match (episode.resumed_at, notes.get(i + 1)) {
            (Some(r), Some(next)) if r < next.at => Verdict::Worked,
            (Some(_), None) => Verdict::Worked,
            (_, Some(_)) => Verdict::Ignored,
            (None, None) => match session_end {
                Some(end) if end.saturating_sub(n.at) >= timeline.threshold_ms_at(n.at) => {
                    Verdict::Ignored
                }
                _ => Verdict::Pending,
            },
        })
        .collect()
}

pub fn ignorance_rate(
    episodes: &[InterventionEpisode],
    timeline: &ConfigTimeline,
    session_end: Option<Millis>,
) -> Ignorance {
    let mut out = Ignorance::default();
    let mut first_seen = false;
    for ep in episodes {
        for v in classify_notifications(ep, timeline, session_end) {
            if !first_seen {
                out.first_only.add(v);
                first_seen = true;
            }
            out.all.add(v);
        }
    }
    out
}

fn window_deltas<'a, I: IntoIterator<Item = &'a InteractionEvent>>(
    events: I,
    from: Millis,
    window: Millis,
) -> impl Iterator<Item = i64> + use<'a, I> {
    events
        .into_iter()
        .filter(move |e| e.kind == EventKind::Key && e.at >= from && e.at < from + window)
        .map(|e| e.chars_delta)
}

/// Characters typed in `[resumed_at, resumed_at + window)`. Deletions are not
/// subtracted. Zero for an episode that never resumed.
pub fn progress_after_resumption<'a>(
    episode: &InterventionEpisode,
    events: impl IntoIterator<Item = &'a InteractionEvent>,
    window: Millis,
) -> u64 {
    let Some(r) = episode.resumed_at else {
        return 0;
    };
    window_deltas(events, r, window)
        .filter(|d| *d > 0)
        .map(|d| d as u64)
        .sum()
}

/// Net character change over the same window as
/// [`progress_after_resumption`].
pub fn net_progress_after_resumption<'a>(
    episode: &InterventionEpisode,
    events: impl IntoIterator<Item = &'a InteractionEvent>,
    window: Millis,
) -> i64 {
    let Some(r) = episode.resumed_at else {
        return 0;
    };
    window_deltas(events, r, window).sum()
}

pub fn total_task_time(start: Millis, end: Option<Millis>) -> Result<Millis, MetricsError> {
    end.map(|e| e.saturating_sub(start))
        .ok_or(MetricsError::SessionNotEnded)
}

/// Builds a report from episode records and the raw event stream of one
/// session. Session-relative timestamps start at 0.
pub fn compute_report(
    session_id: SessionId,
    timeline: &ConfigTimeline,
    episodes: &[InterventionEpisode],
    events: &[InteractionEvent],
    session_end: Option<Millis>,
) -> Result<MetricsReport, MetricsError> {
    let total = total_task_time(0, session_end)?;
    let resumed: Vec<&InterventionEpisode> =
        episodes.iter().filter(|e| e.resumed_at.is_some()).collect();
    Ok(MetricsReport {
        session_id,
        condition: timeline.initial.condition,
        n_episodes: episodes.len(),
        n_notifications: episodes.iter().map(|e| e.notifications.len()).sum(),
        interest_retrieval_times: episodes.iter().filter_map(interest_retrieval_time).collect(),
        ignorance: ignorance_rate(episodes, timeline, session_end),
        progress_after_resumption: resumed
            .iter()
            .map(|ep| {
                let w = timeline.progress_window_ms_at(ep.resumed_at.unwrap_or(0));
                progress_after_resumption(ep, events, w)
            })
            .collect(),
        progress_net: resumed
            .iter()
            .map(|ep| {
                let w = timeline.progress_window_ms_at(ep.resumed_at.unwrap_or(0));
                net_progress_after_resumption(ep, events, w)
            })
            .collect(),
        total_task_time: total,
    })
}

/// Recomputes a report from a persisted log alone.
pub fn report_from_log(log: &SessionLog) -> Result<MetricsReport, MetricsError> {
    let meta = log.meta().ok_or(MetricsError::MissingHeader)?;
    let timeline = log.timeline().ok_or(MetricsError::MissingHeader)?;
    let events: Vec<InteractionEvent> = log.events().cloned().collect();
    compute_report(
        meta.session_id.clone(),
        &timeline,
        &log.episodes(),
        &events,
        log.ended_at(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1). Reported as 0 when n = 1.
    pub sd: f64,
    pub n: usize,
    pub sd_defined: bool,
}

pub fn summarize(values: &[f64]) -> Result<Summary, MetricsError> {
    let n = values.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Summary {
            mean,
            sd: 0.0,
            n,
            sd_defined: false,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Summary {
        mean,
        sd: var.sqrt(),
        n,
        sd_defined: true,
    })
}

/// Per-measure summaries over a set of sessions. List-valued measures are
/// pooled across sessions; ratios and durations are one value per session.
/// A measure with no values is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub sessions: usize,
    pub interest_retrieval_time_ms: Option<Summary>,
    pub ignorance_rate_all: Option<Summary>,
    pub ignorance_rate_first: Option<Summary>,
    pub progress_chars: Option<Summary>,
    pub total_task_time_ms: Option<Summary>,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let pooled = |f: &dyn Fn(&MetricsReport) -> Vec<f64>| {
        summarize(&reports.iter().flat_map(f).collect::<Vec<_>>()).ok()
    };
    Ok(AggregateReport {
        sessions: reports.len(),
        interest_retrieval_time_ms: pooled(&|r| {
            r.interest_retrieval_times.iter().map(|&v| v as f64).collect()
        }),
        ignorance_rate_all: pooled(&|r| r.ignorance.all.rate().into_iter().collect()),
        ignorance_rate_first: pooled(&|r| r.ignorance.first_only.rate().into_iter().collect()),
        progress_chars: pooled(&|r| {
            r.progress_after_resumption.iter().map(|&v| v as f64).collect()
        }),
        total_task_time_ms: pooled(&|r| vec![r.total_task_time as f64]),
    })
}

/// Aggregates keyed by condition name.
pub fn aggregate_by_condition(
    reports: &[MetricsReport],
) -> Result<BTreeMap<String, AggregateReport>, MetricsError> {
    let mut groups: BTreeMap<String, Vec<MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry(r.condition.to_string())
            .or_default()
            .push(r.clone());
    }
    if groups.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    groups
        .into_iter()
        .map(|(k, v)| aggregate(&v).map(|a| (k, a)))
        .collect()
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    session_id: &'a str,
    condition: &'a str,
    n_episodes: usize,
    mean_irt_ms: Option<f64>,
    ignored: u64,
    worked: u64,
    mean_progress_chars: Option<f64>,
    total_time_ms: Millis,
}

fn mean_of(values: &[u64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<u64>() as f64 / values.len() as f64)
}

/// One row per session. Empty cells mark measures without values.
pub fn write_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow {
            session_id: r.session_id.as_str(),
            condition: r.condition.as_str(),
            n_episodes: r.n_episodes,
            mean_irt_ms: mean_of(&r.interest_retrieval_times),
            ignored: r.ignorance.all.ignored,
            worked: r.ignorance.all.worked,
            mean_progress_chars: mean_of(&r.progress_after_resumption),
            total_time_ms: r.total_task_time,
        })?;
    }
    if reports.is_empty() {
        w.write_record([
            "session_id",
            "condition",
            "n_episodes",
            "mean_irt_ms",
            "ignored",
            "worked",
            "mean_progress_chars",
            "total_time_ms",
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
