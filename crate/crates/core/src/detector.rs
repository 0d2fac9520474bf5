//! Interruption and away detection.
//!
//! One [`DetectorState`] per session. Events and clock ticks are fed in
//! timestamp order; each call returns the [`Signal`]s it produced. The
//! thresholds are read from the [`SessionConfig`] passed to every call, so a
//! changed threshold applies from the next evaluation on.
//!
//! When an event and a tick share a timestamp, callers deliver the tick
//! first: an interaction landing exactly on the deadline still counts as a
//! detection followed by an immediate resumption.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SessionConfig;
use crate::event::{EventKind, InteractionEvent};
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Interaction seen since the last tick.
    Active,
    /// Quiet, but not yet for the idle threshold.
    IdleCandidate,
    /// An interruption was detected and prompts are running.
    Intervening,
    /// Page hidden for at least the away delay; in-page prompts stop.
    Away,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    InterruptionDetected,
    RepeatPrompt,
    Resumed,
    AwayConfirmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    InterruptionDetected(Millis),
    RepeatPrompt(Millis),
    Resumed(Millis),
    AwayConfirmed(Millis),
}

impl Signal {
    pub fn at(&self) -> Millis {
        match *self {
            Signal::InterruptionDetected(t)
            | Signal::RepeatPrompt(t)
            | Signal::Resumed(t)
            | Signal::AwayConfirmed(t) => t,
        }
    }

    pub fn kind(&self) -> SignalKind {
        match self {
            Signal::InterruptionDetected(_) => SignalKind::InterruptionDetected,
            Signal::RepeatPrompt(_) => SignalKind::RepeatPrompt,
            Signal::Resumed(_) => SignalKind::Resumed,
            Signal::AwayConfirmed(_) => SignalKind::AwayConfirmed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("event at {at} ms precedes the previous event at {last} ms")]
    OutOfOrderEvent { at: Millis, last: Millis },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorState {
    phase: Phase,
    last_interaction_at: Millis,
    away_since: Option<Millis>,
    /// Latest timestamp observed from either an event or a tick.
    watermark: Millis,
    last_event_at: Option<Millis>,
    /// Time of the most recent prompt in the open episode.
    last_prompt_at: Option<Millis>,
    episode_open: bool,
    away_confirmed: bool,
}

impl Default for DetectorState {
    fn default() -> Self {
        Self::new(0)
    }
}

impl DetectorState {
    /// A fresh detector; session start counts as the first interaction.
    pub fn new(start: Millis) -> Self {
        Self {
            phase: Phase::Active,
            last_interaction_at: start,
            away_since: None,
            watermark: start,
            last_event_at: None,
            last_prompt_at: None,
            episode_open: false,
            away_confirmed: false,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn last_interaction_at(&self) -> Millis {
        self.last_interaction_at
    }

    pub fn away_since(&self) -> Option<Millis> {
        self.away_since
    }

    pub fn last_event_at(&self) -> Option<Millis> {
        self.last_event_at
    }

    pub fn episode_open(&self) -> bool {
        self.episode_open
    }

    pub fn on_event(
        &mut self,
        ev: &InteractionEvent,
        _cfg: &SessionConfig,
    ) -> Result<Vec<Signal>, DetectorError> {
        if let Some(last) = self.last_event_at {
            if ev.at < last {
                return Err(DetectorError::OutOfOrderEvent { at: ev.at, last });
            }
        }
        self.last_event_at = Some(ev.at);
        self.watermark = self.watermark.max(ev.at);

        let mut signals = Vec::new();
        match ev.kind {
            EventKind::PageHidden => {
                if self.away_since.is_none() {
                    self.away_since = Some(ev.at);
                    self.away_confirmed = false;
                }
            }
            EventKind::Blur => {}
            kind => {
                if kind == EventKind::PageVisible {
                    self.away_since = None;
                    self.away_confirmed = false;
                }
                self.last_interaction_at = ev.at;
                if self.episode_open {
                    self.episode_open = false;
                    self.last_prompt_at = None;
                    signals.push(Signal::Resumed(ev.at));
                }
                self.phase = Phase::Active;
            }
        }
        Ok(signals)
    }

    pub fn on_tick(&mut self, now: Millis, cfg: &SessionConfig) -> Vec<Signal> {
        let now = now.max(self.watermark);
        self.watermark = now;
        let threshold = cfg.threshold_ms();
        let mut signals = Vec::new();

        let mut detected_now = false;
        if !self.episode_open {
            if now - self.last_interaction_at >= threshold {
                self.episode_open = true;
                self.last_prompt_at = Some(now);
                if self.phase != Phase::Away {
                    self.phase = Phase::Intervening;
                }
                detected_now = true;
                signals.push(Signal::InterruptionDetected(now));
            } else if now > self.last_interaction_at && self.phase == Phase::Active {
                self.phase = Phase::IdleCandidate;
            }
        }

        if let Some(since) = self.away_since {
            if !self.away_confirmed && now - since >= cfg.away_delay_ms() {
                self.away_confirmed = true;
                self.phase = Phase::Away;
                signals.push(Signal::AwayConfirmed(now));
            }
        }

        if self.phase == Phase::Intervening && !detected_now {
            if let Some(prev) = self.last_prompt_at {
                if now - prev >= threshold {
                    self.last_prompt_at = Some(now);
                    signals.push(Signal::RepeatPrompt(now));
                }
            }
        }
        signals
    }

    /// Re-anchors the repeat cadence on the time a prompt was actually shown,
    /// which trails detection when generation takes time.
    pub fn note_prompt(&mut self, at: Millis) {
        if self.episode_open {
            self.last_prompt_at = Some(self.last_prompt_at.map_or(at, |p| p.max(at)));
        }
    }

    /// Earliest time at which a tick could produce a signal, if any.
    pub fn next_deadline(&self, cfg: &SessionConfig) -> Option<Millis> {
        let threshold = cfg.threshold_ms();
        let mut candidates = Vec::with_capacity(2);
        if !self.episode_open {
            candidates.push(self.last_interaction_at + threshold);
        } else if self.phase == Phase::Intervening {
            if let Some(prev) = self.last_prompt_at {
                candidates.push(prev + threshold);
            }
        }
        if let (Some(since), false) = (self.away_since, self.away_confirmed) {
            candidates.push(since + cfg.away_delay_ms());
        }
        candidates.into_iter().min().map(|t| t.max(self.watermark))
    }
}
