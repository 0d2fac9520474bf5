use rekindle_core::{Condition, DocKind, Millis, SessionConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Work phases emit one Key event at the end of each chunk of this length.
pub const KEY_CHUNK_MS: Millis = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase {
    /// Typing at a steady rate. A trailing partial chunk gets a prorated
    /// character count.
    Work { duration_ms: Millis, chars_per_10s: u32 },
    /// No interaction. Without a duration it lasts until the next phase, which
    /// must then be a reaction, or until the session ends.
    Distract {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ms: Option<Millis>,
    },
    /// Waits for a pending notification, clicks `delay_ms` after the first
    /// one, then plays `then`.
    ReactToNotification {
        delay_ms: Millis,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        then: Option<Box<Phase>>,
    },
    /// Page hidden for the duration, visible again at its end.
    Away { duration_ms: Millis },
    /// Deletes characters in one keystroke burst.
    Delete { chars: u32 },
    /// Adjusts the idle threshold mid-session.
    SetThreshold { idle_threshold_t: i64 },
}

impl Phase {
    fn reacts(&self) -> bool {
        matches!(self, Phase::ReactToNotification { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub script: Vec<Phase>,
    pub seed: u64,
    pub condition: Condition,
    #[serde(default = "default_threshold")]
    pub idle_threshold_t: i64,
    #[serde(default = "default_doc_kind")]
    pub doc_kind: DocKind,
    /// Quiet time after the script before the session ends.
    #[serde(default)]
    pub tail_ms: Millis,
    /// Document content before the first keystroke.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<String>,
    #[serde(default)]
    pub retain_content: bool,
}

fn default_threshold() -> i64 {
    45
}

fn default_doc_kind() -> DocKind {
    DocKind::Text
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("phase {index}: durations and counts must be positive")]
    NonPositive { index: usize },
    #[error("phase {index}: a reaction can never fire without notifications (condition none)")]
    ScriptDeadlock { index: usize },
    #[error("phase {index}: an open-ended distraction must be last or precede a reaction")]
    UnboundedDistract { index: usize },
    #[error("idle threshold must be positive")]
    NonPositiveThreshold,
}

impl Scenario {
    pub fn new(condition: Condition, script: Vec<Phase>) -> Self {
        Self {
            script,
            seed: 0,
            condition,
            idle_threshold_t: default_threshold(),
            doc_kind: DocKind::Text,
            tail_ms: 0,
            initial_text: None,
            recipient: None,
            retain_content: false,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig::new(self.condition)
            .with_threshold(self.idle_threshold_t)
            .with_retain_content(self.retain_content)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.idle_threshold_t <= 0 {
            return Err(ScenarioError::NonPositiveThreshold);
        }
        for (index, phase) in self.script.iter().enumerate() {
            check_phase(phase, index, self.condition)?;
            if let Phase::Distract { duration_ms: None } = phase {
                if let Some(next) = self.script.get(index + 1) {
                    if !next.reacts() {
                        return Err(ScenarioError::UnboundedDistract { index });
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_phase(phase: &Phase, index: usize, condition: Condition) -> Result<(), ScenarioError> {
    let positive = match phase {
        Phase::Work { duration_ms, .. } | Phase::Away { duration_ms } => *duration_ms > 0,
        Phase::Distract { duration_ms } => duration_ms.is_none_or(|d| d > 0),
        Phase::Delete { chars } => *chars > 0,
        Phase::SetThreshold { idle_threshold_t } => *idle_threshold_t > 0,
        Phase::ReactToNotification { then, .. } => {
            if condition == Condition::None {
                return Err(ScenarioError::ScriptDeadlock { index });
            }
            if let Some(next) = then {
                if let Phase::Distract { duration_ms: None } = **next {
                    return Err(ScenarioError::UnboundedDistract { index });
                }
                check_phase(next, index, condition)?;
            }
            true
        }
    };
    if positive {
        Ok(())
    } else {
        Err(ScenarioError::NonPositive { index })
    }
}
