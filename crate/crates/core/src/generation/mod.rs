//! Continuation generation.
//!
//! Prompts are built from the worker's document ([`prompt`]), sent to a
//! [`Generator`] backend, and the raw output is shaped into a
//! [`Continuation`] whose headline is what the notification displays.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::document::{DocKind, Slide};

pub mod encouragement;
pub mod image;
pub mod mock;
pub mod prompt;
pub mod remote;

pub use encouragement::{EncouragementError, EncouragementPicker, EncouragementSet};
pub use image::{attach_image, ImageBackend, MockImageBackend};
pub use mock::{EchoGenerator, MockGenerator};
pub use prompt::{
    build_slide_prompt, build_text_prompt, first_sentence, parse_slide_continuation,
    PromptBuilder, HEADLINE_MAX_CHARS,
};
pub use remote::{RemoteConfig, RemoteGenerator};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("generator did not answer within {0:?}")]
    BackendTimeout(Duration),
    #[error("generator failed: {0}")]
    BackendError(String),
    #[error("generator output could not be parsed")]
    UnparsableOutput,
    #[error("slide deck has no slides")]
    EmptyDeck,
    #[error("prompt is empty")]
    EmptyPrompt,
}

/// A text-generation backend.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, timeout: Duration) -> Result<String, GenerationError>;
}

/// Calls `backend`, rejecting empty prompts before they reach it.
pub fn generate(
    backend: &dyn Generator,
    prompt: &str,
    timeout: Duration,
) -> Result<String, GenerationError> {
    if prompt.trim().is_empty() {
        return Err(GenerationError::EmptyPrompt);
    }
    backend.generate(prompt, timeout)
}

/// Backend selection as it appears in deployment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorBackend {
    RemoteHttp(RemoteConfig),
    DeterministicMock {
        seed: u64,
        #[serde(default)]
        latency_ms: u64,
    },
}

impl GeneratorBackend {
    pub fn build(&self) -> Box<dyn Generator> {
        match self {
            GeneratorBackend::RemoteHttp(cfg) => Box::new(RemoteGenerator::new(cfg.clone())),
            GeneratorBackend::DeterministicMock { seed, latency_ms } => Box::new(
                MockGenerator::new(*seed).with_latency(Duration::from_millis(*latency_ms)),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationBody {
    Text(String),
    Slide(Slide),
}

/// Generated content shaped for display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Continuation {
    pub body: ContinuationBody,
    /// Notification excerpt: first sentence of a text, or a slide's title.
    pub headline: String,
    /// Content handle, stable for identical output.
    pub reference: String,
}

impl Continuation {
    pub fn from_raw(kind: DocKind, raw: &str) -> Result<Self, GenerationError> {
        let reference = content_ref(raw);
        match kind {
            DocKind::Text => {
                let text = raw.trim();
                if text.is_empty() {
                    return Err(GenerationError::UnparsableOutput);
                }
                Ok(Self {
                    headline: first_sentence(text),
                    body: ContinuationBody::Text(text.to_string()),
                    reference,
                })
            }
            DocKind::SlideDeck => {
                let slide = parse_slide_continuation(raw)?;
                Ok(Self {
                    headline: slide.title.clone(),
                    body: ContinuationBody::Slide(slide),
                    reference,
                })
            }
        }
    }

    pub fn kind(&self) -> DocKind {
        match self.body {
            ContinuationBody::Text(_) => DocKind::Text,
            ContinuationBody::Slide(_) => DocKind::SlideDeck,
        }
    }

    /// Full content as plain text, for email bodies and previews.
    pub fn full_text(&self) -> String {
        match &self.body {
            ContinuationBody::Text(t) => t.clone(),
            ContinuationBody::Slide(s) => {
                let mut out = s.title.clone();
                for item in &s.body_items {
                    out.push_str("\n- ");
                    out.push_str(item);
                }
                if let Some(c) = &s.image_caption {
                    out.push_str(&format!("\n[Image: {c}]"));
                }
                out
            }
        }
    }
}

pub fn content_ref(raw: &str) -> String {
    format!("cont:{}", hex::encode(&Sha256::digest(raw.as_bytes())[..8]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_continuation_headline() {
        let c = Continuation::from_raw(DocKind::Text, "  It rained. Then it stopped.").unwrap();
        assert_eq!(c.headline, "It rained.");
        assert_eq!(c.kind(), DocKind::Text);
        assert!(c.reference.starts_with("cont:"));
    }

    #[test]
    fn slide_continuation_headline_is_title() {
        let c = Continuation::from_raw(DocKind::SlideDeck, " Causes\n- a\n- b").unwrap();
        assert_eq!(c.headline, "Causes");
        assert_eq!(c.full_text(), "Causes\n- a\n- b");
    }

    #[test]
    fn blank_output_unparsable() {
        assert_eq!(
            Continuation::from_raw(DocKind::Text, " \n "),
            Err(GenerationError::UnparsableOutput)
        );
        assert_eq!(
            Continuation::from_raw(DocKind::SlideDeck, "   "),
            Err(GenerationError::UnparsableOutput)
        );
    }

    #[test]
    fn empty_prompt_never_reaches_backend() {
        let mock = MockGenerator::new(1);
        assert_eq!(
            generate(&mock, "  ", DEFAULT_TIMEOUT),
            Err(GenerationError::EmptyPrompt)
        );
    }

    #[test]
    fn backend_config_json() {
        let b: GeneratorBackend =
            serde_json::from_str(r#"{"kind":"deterministic_mock","seed":7}"#).unwrap();
        assert_eq!(
            b,
            GeneratorBackend::DeterministicMock {
                seed: 7,
                latency_ms: 0
            }
        );
        let out = b.build().generate("The cat sat", DEFAULT_TIMEOUT).unwrap();
        assert_eq!(out, MockGenerator::new(7).generate("The cat sat", DEFAULT_TIMEOUT).unwrap());
    }
}
