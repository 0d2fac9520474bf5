//! Offline generator for tests and simulations.
//!
//! Output is a pure function of `(seed, prompt)`: the digest of both seeds a
//! ChaCha stream that picks salient words from the prompt and coins two
//! pseudo-words from the digest itself, so distinct prompts practically never
//! share an output. Prompts ending in a `Slide n:` cue get a slide-shaped
//! answer.

use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{GenerationError, Generator};

const SYLLABLES: [&str; 16] = [
    "ka", "ro", "mi", "tes", "lu", "van", "shi", "do", "ne", "pra", "gu", "zel", "fo", "ri",
    "bam", "te",
];
const LINKS: [&str; 6] = [
    "leads straight into",
    "sets the stage for",
    "raises the question of",
    "points toward",
    "is best read alongside",
    "opens onto",
];
const FOLLOW_UPS: [&str; 5] = [
    "The next paragraph should develop this further.",
    "An example would make the point concrete.",
    "This connects back to the opening argument.",
    "A short counterpoint deserves mention here.",
    "The conclusion can draw these threads together.",
];
const FILLER: [&str; 6] = ["draft", "idea", "argument", "theme", "detail", "section"];
const MAX_WORD_CHARS: usize = 24;

#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
    latency: Duration,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            latency: Duration::ZERO,
        }
    }

    /// Simulated response time; calls whose timeout is shorter fail with
    /// [`GenerationError::BackendTimeout`]. No real sleeping happens.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    fn digest(&self, prompt: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(prompt.as_bytes());
        h.finalize().into()
    }
}

impl Generator for MockGenerator {
    fn generate(&self, prompt: &str, timeout: Duration) -> Result<String, GenerationError> {
        if self.latency > timeout {
            return Err(GenerationError::BackendTimeout(timeout));
        }
        let digest = self.digest(prompt);
        let mut rng = ChaCha8Rng::from_seed(digest);
        let coined = format!(
            "{} {}",
            coin(u64::from_le_bytes(digest[..8].try_into().unwrap())),
            coin(u64::from_le_bytes(digest[8..16].try_into().unwrap()))
        );
        let words = salient_words(prompt);
        if ends_with_slide_cue(prompt) {
            Ok(slide_output(&words, &coined, &mut rng))
        } else {
            Ok(text_output(&words, &coined, &mut rng))
        }
    }
}

/// Answers a slide prompt with a copy of its last complete slide, so a
/// serialize/generate/parse cycle can be checked for field loss. Other prompts
/// are returned unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn generate(&self, prompt: &str, _timeout: Duration) -> Result<String, GenerationError> {
        if !ends_with_slide_cue(prompt) {
            return Ok(prompt.to_string());
        }
        let lines: Vec<&str> = prompt.trim_end().lines().collect();
        let body = &lines[..lines.len() - 1];
        let start = body
            .iter()
            .rposition(|l| l.starts_with("Slide "))
            .unwrap_or(0);
        Ok(body[start..].join("\n"))
    }
}

fn coin(mut bits: u64) -> String {
    let mut word = String::new();
    for _ in 0..6 {
        word.push_str(SYLLABLES[(bits & 0xf) as usize]);
        bits >>= 4;
    }
    word
}

fn ends_with_slide_cue(prompt: &str) -> bool {
    prompt
        .trim_end()
        .lines()
        .last()
        .and_then(|l| l.strip_prefix("Slide "))
        .and_then(|rest| rest.strip_suffix(':'))
        .is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
}

/// Words of four or more letters from the end of the prompt, deduplicated in
/// order of last appearance.
fn salient_words(prompt: &str) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for raw in prompt.split(|c: char| !c.is_alphanumeric()).rev() {
        if raw.chars().count() < 4 || raw.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        let word: String = raw.to_lowercase().chars().take(MAX_WORD_CHARS).collect();
        if !seen.contains(&word) {
            seen.push(word);
        }
        if seen.len() == 12 {
            break;
        }
    }
    seen
}

fn pick<'a>(words: &'a [String], rng: &mut ChaCha8Rng) -> &'a str {
    match words.choose(rng) {
        Some(w) => w,
        None => FILLER.choose(rng).expect("filler is non-empty"),
    }
}

fn ngram(words: &[String], rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=2);
    (0..n).map(|_| pick(words, rng)).collect::<Vec<_>>().join(" ")
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn text_output(words: &[String], coined: &str, rng: &mut ChaCha8Rng) -> String {
    let lead = capitalize(&ngram(words, rng));
    let link = LINKS.choose(rng).expect("links");
    let mut out = format!(" {lead} {link} the {coined}.");
    for _ in 0..rng.random_range(1..=2) {
        let subject = capitalize(pick(words, rng));
        let link = LINKS.choose(rng).expect("links");
        out.push_str(&format!(" {subject} {link} {}.", pick(words, rng)));
    }
    out.push(' ');
    out.push_str(FOLLOW_UPS.choose(rng).expect("follow-ups"));
    out
}

fn slide_output(words: &[String], coined: &str, rng: &mut ChaCha8Rng) -> String {
    let title = format!("{} and the {coined}", capitalize(&ngram(words, rng)));
    let mut out = format!(" {title}");
    for _ in 0..rng.random_range(2..=4) {
        let link = LINKS.choose(rng).expect("links");
        out.push_str(&format!("\n- {} {link} {}", pick(words, rng), pick(words, rng)));
    }
    if rng.random_bool(0.5) {
        out.push_str(&format!("\n[Image: {}]", ngram(words, rng)));
    }
    out.push('\n');
    out
}
