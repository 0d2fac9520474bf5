//! The worker's in-progress artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Text,
    SlideDeck,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Slide {
    pub title: String,
    #[serde(default)]
    pub body_items: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_caption: Option<String>,
    /// Asset reference attached by an image backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl Slide {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn with_items<I, S>(mut self, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.body_items = items.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.image_caption = Some(caption.into());
        self
    }

    fn char_len(&self) -> usize {
        self.title.chars().count()
            + self.body_items.iter().map(|b| b.chars().count()).sum::<usize>()
            + self.image_caption.as_ref().map_or(0, |c| c.chars().count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "doc_kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkDocument {
    Text { text: String },
    SlideDeck { slides: Vec<Slide> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("document kind mismatch: session holds {expected:?}, update targets {found:?}")]
    KindMismatch { expected: DocKind, found: DocKind },
    #[error("slide index {index} out of range for a deck of {len}")]
    SlideOutOfRange { index: usize, len: usize },
}

/// A change submitted by the editor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentUpdate {
    Replace(WorkDocument),
    AppendSlide(Slide),
    ReplaceSlide { index: usize, slide: Slide },
}

impl WorkDocument {
    pub fn empty(kind: DocKind) -> Self {
        match kind {
            DocKind::Text => WorkDocument::Text {
                text: String::new(),
            },
            DocKind::SlideDeck => WorkDocument::SlideDeck { slides: Vec::new() },
        }
    }

    pub fn text(text: impl Into<String>) -> Self {
        WorkDocument::Text { text: text.into() }
    }

    pub fn deck(slides: Vec<Slide>) -> Self {
        WorkDocument::SlideDeck { slides }
    }

    pub fn kind(&self) -> DocKind {
        match self {
            WorkDocument::Text { .. } => DocKind::Text,
            WorkDocument::SlideDeck { .. } => DocKind::SlideDeck,
        }
    }

    /// Number of characters of user content.
    pub fn char_len(&self) -> usize {
        match self {
            WorkDocument::Text { text } => text.chars().count(),
            WorkDocument::SlideDeck { slides } => slides.iter().map(Slide::char_len).sum(),
        }
    }

    pub fn slide_count(&self) -> usize {
        match self {
            WorkDocument::Text { .. } => 0,
            WorkDocument::SlideDeck { slides } => slides.len(),
        }
    }

    /// Stable digest of the content, used as a generation cache key.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("document serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }

    pub fn apply(&mut self, update: DocumentUpdate) -> Result<(), DocumentError> {
        match update {
            DocumentUpdate::Replace(doc) => {
                if doc.kind() != self.kind() {
                    return Err(DocumentError::KindMismatch {
                        expected: self.kind(),
                        found: doc.kind(),
                    });
                }
                *self = doc;
            }
            DocumentUpdate::AppendSlide(slide) => match self {
                WorkDocument::SlideDeck { slides } => slides.push(slide),
                WorkDocument::Text { .. } => {
                    return Err(DocumentError::KindMismatch {
                        expected: DocKind::Text,
                        found: DocKind::SlideDeck,
                    })
                }
            },
            DocumentUpdate::ReplaceSlide { index, slide } => match self {
                WorkDocument::SlideDeck { slides } => {
                    let len = slides.len();
                    let target = slides
                        .get_mut(index)
                        .ok_or(DocumentError::SlideOutOfRange { index, len })?;
                    *target = slide;
                }
                WorkDocument::Text { .. } => {
                    return Err(DocumentError::KindMismatch {
                        expected: DocKind::Text,
                        found: DocKind::SlideDeck,
                    })
                }
            },
        }
        Ok(())
    }
}
