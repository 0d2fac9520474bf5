//! Session configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Millis;

pub const DEFAULT_IDLE_THRESHOLD_S: i64 = 45;
pub const DEFAULT_AWAY_DELAY_S: i64 = 300;

/// Which intervention a session receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Notify with a generated continuation of the worker's document.
    Proposed,
    /// Notify with a fixed encouraging message.
    Control,
    /// Detect and log only.
    None,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Proposed => "proposed",
            Condition::Control => "control",
            Condition::None => "none",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(Condition::Proposed),
            "control" => Ok(Condition::Control),
            "none" => Ok(Condition::None),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("duration `{0}` must be positive")]
    NonPositiveDuration(&'static str),
}

/// Per-session settings. Durations are whole seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Quiet time after which an interruption is declared.
    #[serde(default = "default_threshold")]
    pub idle_threshold_t: i64,
    /// Hidden time after which the away email goes out.
    #[serde(default = "default_away_delay")]
    pub away_delay: i64,
    pub condition: Condition,
    /// Keep document text in the session log. Off by default.
    #[serde(default)]
    pub retain_content: bool,
    /// Window for counting progress after resumption; follows
    /// `idle_threshold_t` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_window: Option<i64>,
}

fn default_threshold() -> i64 {
    DEFAULT_IDLE_THRESHOLD_S
}

fn default_away_delay() -> i64 {
    DEFAULT_AWAY_DELAY_S
}

impl SessionConfig {
    pub fn new(condition: Condition) -> Self {
        Self {
            idle_threshold_t: DEFAULT_IDLE_THRESHOLD_S,
            away_delay: DEFAULT_AWAY_DELAY_S,
            condition,
            retain_content: false,
            progress_window: None,
        }
    }

    pub fn with_threshold(mut self, secs: i64) -> Self {
        self.idle_threshold_t = secs;
        self
    }

    pub fn with_away_delay(mut self, secs: i64) -> Self {
        self.away_delay = secs;
        self
    }

    pub fn with_retain_content(mut self, retain: bool) -> Self {
        self.retain_content = retain;
        self
    }

    pub fn with_progress_window(mut self, secs: Option<i64>) -> Self {
        self.progress_window = secs;
        self
    }

    /// Returns the config unchanged when every duration is positive.
    pub fn validate(self) -> Result<Self, ConfigError> {
        if self.idle_threshold_t <= 0 {
            return Err(ConfigError::NonPositiveDuration("idle_threshold_t"));
        }
        if self.away_delay <= 0 {
            return Err(ConfigError::NonPositiveDuration("away_delay"));
        }
        if matches!(self.progress_window, Some(w) if w <= 0) {
            return Err(ConfigError::NonPositiveDuration("progress_window"));
        }
        Ok(self)
    }

    pub fn threshold_ms(&self) -> Millis {
        secs_to_ms(self.idle_threshold_t)
    }

    pub fn away_delay_ms(&self) -> Millis {
        secs_to_ms(self.away_delay)
    }

    pub fn progress_window_ms(&self) -> Millis {
        secs_to_ms(self.progress_window.unwrap_or(self.idle_threshold_t))
    }
}

fn secs_to_ms(secs: i64) -> Millis {
    (secs.max(0) as u64).saturating_mul(1000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = SessionConfig::new(Condition::Proposed);
        assert_eq!(cfg.idle_threshold_t, 45);
        assert_eq!(cfg.away_delay, 300);
        assert_eq!(cfg.clone().validate(), Ok(cfg));
    }

    #[test]
    fn zero_threshold_rejected() {
        let cfg = SessionConfig::new(Condition::Proposed).with_threshold(0);
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::NonPositiveDuration("idle_threshold_t"))
        );
    }

    #[test]
    fn minimal_positive_ok() {
        let cfg = SessionConfig::new(Condition::None)
            .with_threshold(1)
            .with_away_delay(1);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn negative_away_and_window_rejected() {
        let cfg = SessionConfig::new(Condition::Control).with_away_delay(-3);
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::NonPositiveDuration("away_delay"))
        );
        let cfg = SessionConfig::new(Condition::Control).with_progress_window(Some(0));
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::NonPositiveDuration("progress_window"))
        );
    }

    #[test]
    fn progress_window_follows_threshold() {
        let cfg = SessionConfig::new(Condition::Proposed).with_threshold(60);
        assert_eq!(cfg.progress_window_ms(), 60_000);
        let cfg = cfg.with_progress_window(Some(30));
        assert_eq!(cfg.progress_window_ms(), 30_000);
    }

    #[test]
    fn json_defaults() {
        let cfg: SessionConfig = serde_json::from_str(r#"{"condition":"control"}"#).unwrap();
        assert_eq!(cfg, SessionConfig::new(Condition::Control));
        assert!(serde_json::from_str::<SessionConfig>(r#"{"condition":"x"}"#).is_err());
    }
}
