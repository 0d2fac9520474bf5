//! Prompt construction and output shaping.

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::document::{Slide, WorkDocument};

pub const HEADLINE_MAX_CHARS: usize = 140;
pub const SLIDE_TITLE_MAX_CHARS: usize = 120;
pub const DEFAULT_MAX_PROMPT_CHARS: usize = 2_000;
pub const DEFAULT_OPENER: &str = "Here is the first paragraph of my draft:\n";

const SENTENCE_TERMINALS: [char; 6] = ['.', '!', '?', '。', '！', '？'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBuilder {
    pub max_chars: usize,
    pub opener: String,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_MAX_PROMPT_CHARS,
            opener: DEFAULT_OPENER.to_string(),
        }
    }
}

impl PromptBuilder {
    pub fn build(&self, doc: &WorkDocument) -> Result<String, GenerationError> {
        match doc {
            WorkDocument::Text { text } => Ok(build_text_prompt(text, self.max_chars, &self.opener)),
            WorkDocument::SlideDeck { slides } => build_slide_prompt(slides),
        }
    }
}

/// The trailing `max_chars` characters of `text`. When the cut falls inside a
/// line, the partial line is dropped if a later line exists. Blank text yields
/// `opener`.
pub fn build_text_prompt(text: &str, max_chars: usize, opener: &str) -> String {
    if text.trim().is_empty() {
        return opener.to_string();
    }
    let total = text.chars().count();
    if total <= max_chars {
        return text.to_string();
    }
    let cut = text
        .char_indices()
        .nth(total - max_chars)
        .map_or(text.len(), |(i, _)| i);
    let tail = &text[cut..];
    if text[..cut].ends_with('\n') {
        return tail.to_string();
    }
    match tail.find('\n') {
        Some(nl) if !tail[nl + 1..].is_empty() => tail[nl + 1..].to_string(),
        _ => tail.to_string(),
    }
}

/// Serializes a deck as `Slide i: title`, `- item` and `[Image: caption]`
/// lines, ending with an open `Slide n+1:` cue.
pub fn build_slide_prompt(slides: &[Slide]) -> Result<String, GenerationError> {
    if slides.is_empty() {
        return Err(GenerationError::EmptyDeck);
    }
    let mut lines = Vec::new();
    for (i, slide) in slides.iter().enumerate() {
        lines.push(format!("Slide {}: {}", i + 1, slide.title));
        for item in &slide.body_items {
            lines.push(format!("- {item}"));
        }
        if let Some(caption) = &slide.image_caption {
            lines.push(format!("[Image: {caption}]"));
        }
    }
    lines.push(format!("Slide {}:", slides.len() + 1));
    Ok(lines.join("\n"))
}

fn slide_heading(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("Slide ")?;
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    rest[digits..].strip_prefix(':').map(str::trim)
}

fn image_caption(line: &str) -> Option<&str> {
    line.strip_prefix("[Image:")?
        .strip_suffix(']')
        .map(str::trim)
}

/// Reads one slide from generator output that followed a `Slide n:` cue.
pub fn parse_slide_continuation(raw: &str) -> Result<Slide, GenerationError> {
    let mut lines = raw.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().ok_or(GenerationError::UnparsableOutput)?;
    let title = slide_heading(first).unwrap_or(first);
    if title.is_empty() {
        return Err(GenerationError::UnparsableOutput);
    }
    let mut slide = Slide::new(truncate_chars(title, SLIDE_TITLE_MAX_CHARS));
    for line in lines {
        if slide_heading(line).is_some() {
            break;
        }
        if let Some(caption) = image_caption(line) {
            slide.image_caption = Some(caption.to_string());
        } else if let Some(item) = line.strip_prefix('-') {
            let item = item.trim();
            if !item.is_empty() {
                slide.body_items.push(item.to_string());
            }
        }
    }
    Ok(slide)
}

/// Up to and including the first sentence terminal, capped at
/// [`HEADLINE_MAX_CHARS`].
pub fn first_sentence(text: &str) -> String {
    let text = text.trim_start();
    let end = text
        .char_indices()
        .find(|(_, c)| SENTENCE_TERMINALS.contains(c))
        .map_or(text.len(), |(i, c)| i + c.len_utf8());
    truncate_chars(text[..end].trim_end(), HEADLINE_MAX_CHARS)
}

fn truncate_chars(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}
