//! Encouraging messages for the control condition.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const ENCOURAGEMENT_COUNT: usize = 6;

/// The default message set, shipped as `config/encouragements.json`.
pub const DEFAULT_MESSAGES_JSON: &str = include_str!("../../config/encouragements.json");

#[derive(Debug, Error)]
pub enum EncouragementError {
    #[error("an encouragement set needs exactly {ENCOURAGEMENT_COUNT} messages, got {0}")]
    WrongCount(usize),
    #[error("encouragement message {0} is empty")]
    EmptyMessage(usize),
    #[error("reading encouragement file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing encouragement file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncouragementSet {
    messages: Vec<String>,
    rng_seed: u64,
}

impl EncouragementSet {
    pub fn new(messages: Vec<String>, rng_seed: u64) -> Result<Self, EncouragementError> {
        if messages.len() != ENCOURAGEMENT_COUNT {
            return Err(EncouragementError::WrongCount(messages.len()));
        }
        if let Some(i) = messages.iter().position(|m| m.trim().is_empty()) {
            return Err(EncouragementError::EmptyMessage(i));
        }
        Ok(Self { messages, rng_seed })
    }

    pub fn default_with_seed(rng_seed: u64) -> Self {
        let messages: Vec<String> =
            serde_json::from_str(DEFAULT_MESSAGES_JSON).expect("bundled messages are valid JSON");
        Self::new(messages, rng_seed).expect("bundled message set is valid")
    }

    /// Loads a JSON array of six strings.
    pub fn from_file(path: &Path, rng_seed: u64) -> Result<Self, EncouragementError> {
        let messages: Vec<String> = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::new(messages, rng_seed)
    }

    pub fn messages(&self) -> &[String] {
        &self.messages
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn picker(&self) -> EncouragementPicker {
        EncouragementPicker {
            rng: ChaCha8Rng::seed_from_u64(self.rng_seed),
            set: self.clone(),
        }
    }
}

/// Draws messages uniformly; the sequence is fixed by the set's seed.
#[derive(Debug, Clone)]
pub struct EncouragementPicker {
    set: EncouragementSet,
    rng: ChaCha8Rng,
}

impl EncouragementPicker {
    pub fn pick_index(&mut self) -> usize {
        self.rng.random_range(0..ENCOURAGEMENT_COUNT)
    }

    pub fn pick(&mut self) -> &str {
        let i = self.pick_index();
        &self.set.messages[i]
    }
}
