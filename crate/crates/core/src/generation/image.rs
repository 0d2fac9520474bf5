//! Optional image step for generated slides.

use sha2::{Digest, Sha256};

use super::GenerationError;
use crate::document::Slide;

pub trait ImageBackend: Send + Sync {
    /// Returns an asset reference for an image matching `prompt`.
    fn render(&self, prompt: &str) -> Result<String, GenerationError>;
}

/// Returns `img:<first 16 hex digits of sha256(prompt)>`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockImageBackend;

impl ImageBackend for MockImageBackend {
    fn render(&self, prompt: &str) -> Result<String, GenerationError> {
        Ok(format!("img:{}", hex::encode(&Sha256::digest(prompt.as_bytes())[..8])))
    }
}

/// Asks `backend` for an image of the slide title. Without a backend, or on
/// any backend failure, the slide comes back unchanged.
pub fn attach_image(mut slide: Slide, backend: Option<&dyn ImageBackend>) -> Slide {
    let Some(backend) = backend else {
        return slide;
    };
    match backend.render(&slide.title) {
        Ok(asset) => slide.image_ref = Some(asset),
        Err(err) => tracing::warn!(%err, title = %slide.title, "image generation failed, slide left as is"),
    }
    slide
}
