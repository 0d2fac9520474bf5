//! Turns detector signals into interventions.
//!
//! The dispatcher is I/O free: it returns [`Effect`]s for the caller to carry
//! out (show a notification, run a generation, append a slide, send an
//! email) and is told about generation results through
//! [`Dispatcher::complete_generation`]. Episodes are recorded as they unfold.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::Condition;
use crate::detector::Signal;
use crate::document::{DocKind, Slide, WorkDocument};
use crate::episode::{EpisodeId, InterventionEpisode, Notification, PayloadKind};
use crate::event::SessionId;
use crate::generation::{
    attach_image, Continuation, ContinuationBody, EncouragementPicker, EncouragementSet,
    GenerationError, ImageBackend, PromptBuilder, DEFAULT_TIMEOUT,
};
use crate::Millis;

const PREVIEW_CHARS: usize = 280;

#[derive(Debug, Clone)]
pub struct DispatcherConfig {
    pub prompt: PromptBuilder,
    pub generation_timeout: Duration,
    pub encouragements: EncouragementSet,
}

impl Default for DispatcherConfig {
    fn default() -> Self {
        Self {
            prompt: PromptBuilder::default(),
            generation_timeout: DEFAULT_TIMEOUT,
            encouragements: EncouragementSet::default_with_seed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationPayload {
    pub headline: String,
    pub body_preview: String,
    pub payload_kind: PayloadKind,
    pub continuation_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwayEmail {
    pub episode_id: Option<EpisodeId>,
    pub recipient: Option<String>,
    pub headline: String,
    pub body: String,
    pub payload_kind: PayloadKind,
    pub continuation_ref: Option<String>,
    pub queued_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    /// Content hash of the document the prompt was built from.
    pub key: String,
    pub prompt: String,
    pub doc_kind: DocKind,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Notify {
        at: Millis,
        episode_id: EpisodeId,
        payload: NotificationPayload,
        continuation: Option<Continuation>,
    },
    Generate(GenerationRequest),
    AppendSlide {
        at: Millis,
        episode_id: EpisodeId,
        slide: Slide,
    },
    QueueEmail(AwayEmail),
}

#[derive(Debug)]
struct Pending {
    key: String,
    for_episode: Option<EpisodeId>,
    email_at: Option<Millis>,
}

pub struct Dispatcher {
    session_id: SessionId,
    condition: Condition,
    prompt: PromptBuilder,
    timeout: Duration,
    picker: EncouragementPicker,
    recipient: Option<String>,
    image: Option<Arc<dyn ImageBackend>>,
    episodes: Vec<InterventionEpisode>,
    open: bool,
    payload: Option<NotificationPayload>,
    current: Option<Continuation>,
    cache: HashMap<String, Continuation>,
    pending: Option<Pending>,
    generation_requests: u64,
}

impl std::fmt::Debug for Dispatcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dispatcher")
            .field("session_id", &self.session_id)
            .field("condition", &self.condition)
            .field("episodes", &self.episodes.len())
            .field("open", &self.open)
            .finish_non_exhaustive()
    }
}

impl Dispatcher {
    pub fn new(session_id: SessionId, condition: Condition, config: DispatcherConfig) -> Self {
        Self {
            session_id,
            condition,
            prompt: config.prompt,
            timeout: config.generation_timeout,
            picker: config.encouragements.picker(),
            recipient: None,
            image: None,
            episodes: Vec::new(),
            open: false,
            payload: None,
            current: None,
            cache: HashMap::new(),
            pending: None,
            generation_requests: 0,
        }
    }

    pub fn with_recipient(mut self, recipient: Option<String>) -> Self {
        self.recipient = recipient;
        self
    }

    pub fn with_image_backend(mut self, backend: Option<Arc<dyn ImageBackend>>) -> Self {
        self.image = backend;
        self
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn episodes(&self) -> &[InterventionEpisode] {
        &self.episodes
    }

    pub fn into_episodes(self) -> Vec<InterventionEpisode> {
        self.episodes
    }

    pub fn open_episode(&self) -> Option<&InterventionEpisode> {
        if self.open {
            self.episodes.last()
        } else {
            None
        }
    }

    /// Number of generations requested so far.
    pub fn generation_requests(&self) -> u64 {
        self.generation_requests
    }

    pub fn has_pending_generation(&self) -> bool {
        self.pending.is_some()
    }

    pub fn handle_signal(&mut self, signal: Signal, doc: &WorkDocument) -> Vec<Effect> {
        match signal {
            Signal::InterruptionDetected(at) => self.on_detected(at, doc),
            Signal::RepeatPrompt(at) => self.on_repeat(at),
            Signal::Resumed(at) => {
                self.on_resumed(at);
                Vec::new()
            }
            Signal::AwayConfirmed(at) => self.on_away(at, doc),
        }
    }

    fn on_detected(&mut self, at: Millis, doc: &WorkDocument) -> Vec<Effect> {
        let id = EpisodeId::nth(&self.session_id, self.episodes.len() as u64 + 1);
        self.episodes.push(InterventionEpisode::open(id.clone(), at));
        self.open = true;
        self.payload = None;
        self.current = None;
        match self.condition {
            Condition::None => Vec::new(),
            Condition::Control => {
                self.payload = Some(self.encouragement());
                self.notify(at).into_iter().collect()
            }
            Condition::Proposed => self.obtain_continuation(at, doc, Some(id), None),
        }
    }

    fn on_repeat(&mut self, at: Millis) -> Vec<Effect> {
        if !self.open || self.payload.is_none() || self.condition == Condition::None {
            return Vec::new();
        }
        if self.condition == Condition::Control {
            self.payload = Some(self.encouragement());
        }
        self.notify(at).into_iter().collect()
    }

    fn on_resumed(&mut self, at: Millis) {
        if self.open {
            if let Some(ep) = self.episodes.last_mut() {
                ep.resumed_at = Some(at);
            }
        }
        self.open = false;
        self.payload = None;
        self.current = None;
        if let Some(p) = &mut self.pending {
            p.for_episode = None;
        }
    }

    fn on_away(&mut self, at: Millis, doc: &WorkDocument) -> Vec<Effect> {
        match self.condition {
            Condition::None => Vec::new(),
            Condition::Control => {
                let msg = self.encouragement();
                vec![Effect::QueueEmail(self.email(at, &msg))]
            }
            Condition::Proposed => {
                if let Some(c) = self.current.clone() {
                    return vec![Effect::QueueEmail(self.continuation_email(at, &c))];
                }
                self.obtain_continuation(at, doc, None, Some(at))
            }
        }
    }

    /// Feeds back the result of a [`Effect::Generate`].
    pub fn complete_generation(
        &mut self,
        key: &str,
        result: Result<String, GenerationError>,
        doc_kind: DocKind,
        at: Millis,
    ) -> Vec<Effect> {
        let pending = match self.pending.take() {
            Some(p) if p.key == key => p,
            other => {
                self.pending = other;
                if let Ok(raw) = result {
                    if let Ok(c) = self.shape(doc_kind, &raw) {
                        self.cache.insert(key.to_string(), c);
                    }
                }
                return Vec::new();
            }
        };
        let shaped = result.and_then(|raw| self.shape(doc_kind, &raw));
        let mut effects = Vec::new();
        match shaped {
            Ok(c) => {
                self.cache.insert(key.to_string(), c.clone());
                if self.waiting_for(&pending.for_episode) {
                    effects.extend(self.deliver(at, c.clone()));
                }
                if pending.email_at.is_some() {
                    effects.push(Effect::QueueEmail(self.continuation_email(at, &c)));
                }
            }
            Err(err) => {
                tracing::warn!(session = %self.session_id, %err, "generation failed, falling back to encouragement");
                if self.waiting_for(&pending.for_episode) {
                    effects.extend(self.fallback(at));
                }
                if pending.email_at.is_some() {
                    let msg = self.encouragement();
                    effects.push(Effect::QueueEmail(self.email(at, &msg)));
                }
            }
        }
        effects
    }

    fn waiting_for(&self, episode: &Option<EpisodeId>) -> bool {
        match (episode, self.open_episode()) {
            (Some(id), Some(ep)) => &ep.episode_id == id && ep.notifications.is_empty(),
            _ => false,
        }
    }

    fn shape(&self, doc_kind: DocKind, raw: &str) -> Result<Continuation, GenerationError> {
        let mut c = Continuation::from_raw(doc_kind, raw)?;
        if let ContinuationBody::Slide(slide) = c.body {
            c.body = ContinuationBody::Slide(attach_image(slide, self.image.as_deref()));
        }
        Ok(c)
    }

    fn obtain_continuation(
        &mut self,
        at: Millis,
        doc: &WorkDocument,
        for_episode: Option<EpisodeId>,
        email_at: Option<Millis>,
    ) -> Vec<Effect> {
        let key = doc.content_hash();
        if let Some(c) = self.cache.get(&key).cloned() {
            let mut effects = Vec::new();
            if for_episode.is_some() {
                effects.extend(self.deliver(at, c.clone()));
            }
            if email_at.is_some() {
                effects.push(Effect::QueueEmail(self.continuation_email(at, &c)));
            }
            return effects;
        }
        if let Some(p) = &mut self.pending {
            if for_episode.is_some() {
                p.for_episode = for_episode;
            }
            if email_at.is_some() {
                p.email_at = email_at;
            }
            return Vec::new();
        }
        match self.prompt.build(doc) {
            Ok(prompt) => {
                self.pending = Some(Pending {
                    key: key.clone(),
                    for_episode,
                    email_at,
                });
                self.generation_requests += 1;
                vec![Effect::Generate(GenerationRequest {
                    key,
                    prompt,
                    doc_kind: doc.kind(),
                    timeout: self.timeout,
                })]
            }
            Err(err) => {
                tracing::warn!(session = %self.session_id, %err, "cannot build prompt, falling back to encouragement");
                let mut effects = Vec::new();
                if for_episode.is_some() {
                    effects.extend(self.fallback(at));
                }
                if email_at.is_some() {
                    let msg = self.encouragement();
                    effects.push(Effect::QueueEmail(self.email(at, &msg)));
                }
                effects
            }
        }
    }

    fn deliver(&mut self, at: Millis, c: Continuation) -> Vec<Effect> {
        let Some(ep) = self.episodes.last_mut().filter(|_| self.open) else {
            return Vec::new();
        };
        ep.continuation_ref = Some(c.reference.clone());
        let episode_id = ep.episode_id.clone();
        self.payload = Some(NotificationPayload {
            headline: c.headline.clone(),
            body_preview: preview(&c.full_text()),
            payload_kind: PayloadKind::Continuation,
            continuation_ref: Some(c.reference.clone()),
        });
        let slide = match &c.body {
            ContinuationBody::Slide(s) => Some(s.clone()),
            ContinuationBody::Text(_) => None,
        };
        self.current = Some(c);
        let mut effects: Vec<Effect> = self.notify(at).into_iter().collect();
        if let Some(slide) = slide {
            effects.push(Effect::AppendSlide {
                at,
                episode_id,
                slide,
            });
        }
        effects
    }

    fn fallback(&mut self, at: Millis) -> Vec<Effect> {
        if let Some(ep) = self.episodes.last_mut().filter(|_| self.open) {
            ep.fallback = true;
        } else {
            return Vec::new();
        }
        self.payload = Some(self.encouragement());
        self.notify(at).into_iter().collect()
    }

    fn notify(&mut self, at: Millis) -> Option<Effect> {
        let payload = self.payload.clone()?;
        let ep = self.episodes.last_mut().filter(|_| self.open)?;
        ep.notifications.push(Notification {
            at,
            payload_kind: payload.payload_kind,
            headline: payload.headline.clone(),
        });
        Some(Effect::Notify {
            at,
            episode_id: ep.episode_id.clone(),
            continuation: self.current.clone(),
            payload,
        })
    }

    fn encouragement(&mut self) -> NotificationPayload {
        let msg = self.picker.pick().to_string();
        NotificationPayload {
            body_preview: msg.clone(),
            headline: msg,
            payload_kind: PayloadKind::Encouragement,
            continuation_ref: None,
        }
    }

    fn email(&self, at: Millis, payload: &NotificationPayload) -> AwayEmail {
        AwayEmail {
            episode_id: self.open_episode().map(|e| e.episode_id.clone()),
            recipient: self.recipient.clone(),
            headline: payload.headline.clone(),
            body: payload.body_preview.clone(),
            payload_kind: payload.payload_kind,
            continuation_ref: payload.continuation_ref.clone(),
            queued_at: at,
        }
    }

    fn continuation_email(&self, at: Millis, c: &Continuation) -> AwayEmail {
        AwayEmail {
            episode_id: self.open_episode().map(|e| e.episode_id.clone()),
            recipient: self.recipient.clone(),
            headline: c.headline.clone(),
            body: c.full_text(),
            payload_kind: PayloadKind::Continuation,
            continuation_ref: Some(c.reference.clone()),
            queued_at: at,
        }
    }
}

fn preview(text: &str) -> String {
    text.chars().take(PREVIEW_CHARS).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{first_sentence, generate, Generator, MockGenerator};

    fn dispatcher(condition: Condition) -> Dispatcher {
        Dispatcher::new(SessionId::new("s1"), condition, DispatcherConfig::default())
            .with_recipient(Some("w@example.test".into()))
    }

    /// Runs generation requests inline, as the virtual-clock service does.
    fn run(d: &mut Dispatcher, effects: Vec<Effect>, gen: &dyn Generator, at: Millis) -> Vec<Effect> {
        let mut out = Vec::new();
        for e in effects {
            if let Effect::Generate(req) = e {
                let result = generate(gen, &req.prompt, req.timeout);
                out.extend(d.complete_generation(&req.key, result, req.doc_kind, at));
            } else {
                out.push(e);
            }
        }
        out
    }

    fn notifications(effects: &[Effect]) -> Vec<&NotificationPayload> {
        effects
            .iter()
            .filter_map(|e| match e {
                Effect::Notify { payload, .. } => Some(payload),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn proposed_notifies_with_first_sentence() {
        let gen = MockGenerator::new(7);
        let doc = WorkDocument::text("The village by the river was quiet that summer.");
        let mut d = dispatcher(Condition::Proposed);
        let effects = d.handle_signal(Signal::InterruptionDetected(45_000), &doc);
        assert!(matches!(effects.as_slice(), [Effect::Generate(_)]));
        let prompt = match &effects[0] {
            Effect::Generate(r) => r.prompt.clone(),
            _ => unreachable!(),
        };
        let effects = run(&mut d, effects, &gen, 45_000);
        let raw = gen.generate(&prompt, DEFAULT_TIMEOUT).unwrap();
        let notes = notifications(&effects);
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].headline, first_sentence(raw.trim()));
        assert_eq!(notes[0].payload_kind, PayloadKind::Continuation);
        assert_eq!(d.episodes()[0].notifications[0].at, 45_000);
        assert_eq!(d.generation_requests(), 1);
    }

    #[test]
    fn repeats_reuse_continuation() {
        let gen = MockGenerator::new(7);
        let doc = WorkDocument::text("Some words to continue from here.");
        let mut d = dispatcher(Condition::Proposed);
        let e = d.handle_signal(Signal::InterruptionDetected(45_000), &doc);
        let first = run(&mut d, e, &gen, 45_000);
        let again = d.handle_signal(Signal::RepeatPrompt(90_000), &doc);
        assert_eq!(notifications(&first)[0], notifications(&again)[0]);
        d.handle_signal(Signal::Resumed(100_000), &doc);
        let ep = &d.episodes()[0];
        assert_eq!(ep.notifications.len(), 2);
        assert_eq!(ep.resumed_at, Some(100_000));
        assert_eq!(d.generation_requests(), 1);
        // unchanged document: next episode is served from cache
        let e = d.handle_signal(Signal::InterruptionDetected(200_000), &doc);
        assert_eq!(notifications(&e).len(), 1);
        assert_eq!(d.generation_requests(), 1);
    }

    #[test]
    fn control_uses_encouragements_without_generation() {
        let set = EncouragementSet::default_with_seed(0);
        let mut d = dispatcher(Condition::Control);
        let doc = WorkDocument::text("anything");
        let e = d.handle_signal(Signal::InterruptionDetected(45_000), &doc);
        let notes = notifications(&e);
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].payload_kind, PayloadKind::Encouragement);
        assert!(set.messages().contains(&notes[0].headline));
        assert!(!e.iter().any(|e| matches!(e, Effect::Generate(_))));
        let e = d.handle_signal(Signal::RepeatPrompt(90_000), &doc);
        assert_eq!(notifications(&e).len(), 1);
        assert_eq!(d.generation_requests(), 0);
    }

    #[test]
    fn none_condition_logs_only() {
        let mut d = dispatcher(Condition::None);
        let doc = WorkDocument::text("x");
        assert!(d.handle_signal(Signal::InterruptionDetected(45_000), &doc).is_empty());
        assert!(d.handle_signal(Signal::RepeatPrompt(90_000), &doc).is_empty());
        assert!(d.handle_signal(Signal::AwayConfirmed(300_000), &doc).is_empty());
        d.handle_signal(Signal::Resumed(310_000), &doc);
        let ep = &d.episodes()[0];
        assert!(ep.notifications.is_empty());
        assert_eq!(ep.detected_at, 45_000);
        assert_eq!(ep.resumed_at, Some(310_000));
    }

    #[test]
    fn timeout_falls_back_to_encouragement() {
        let slow = MockGenerator::new(1).with_latency(Duration::from_secs(60));
        let mut d = dispatcher(Condition::Proposed);
        let doc = WorkDocument::text("The draft so far.");
        let e = d.handle_signal(Signal::InterruptionDetected(45_000), &doc);
        let e = run(&mut d, e, &slow, 45_000);
        let notes = notifications(&e);
        assert_eq!(notes[0].payload_kind, PayloadKind::Encouragement);
        assert!(d.episodes()[0].fallback);
    }

    #[test]
    fn empty_deck_falls_back() {
        let mut d = dispatcher(Condition::Proposed);
        let e = d.handle_signal(Signal::InterruptionDetected(45_000), &WorkDocument::deck(vec![]));
        assert_eq!(notifications(&e)[0].payload_kind, PayloadKind::Encouragement);
        assert_eq!(d.generation_requests(), 0);
    }

    #[test]
    fn slide_continuation_appends_and_uses_title() {
        let gen = MockGenerator::new(5);
        let doc = WorkDocument::deck(vec![Slide::new("Aging Society").with_items(["definition"])]);
        let mut d = dispatcher(Condition::Proposed);
        let e = d.handle_signal(Signal::InterruptionDetected(45_000), &doc);
        let e = run(&mut d, e, &gen, 45_000);
        let headline = notifications(&e)[0].headline.clone();
        let appended = e
            .iter()
            .find_map(|e| match e {
                Effect::AppendSlide { slide, .. } => Some(slide.clone()),
                _ => None,
            })
            .expect("slide appended");
        assert_eq!(appended.title, headline);
    }

    #[test]
    fn resumption_before_generation_drops_notification() {
        let gen = MockGenerator::new(7);
        let doc = WorkDocument::text("Words words words.");
        let mut d = dispatcher(Condition::Proposed);
        let e = d.handle_signal(Signal::InterruptionDetected(45_000), &doc);
        let Effect::Generate(req) = &e[0] else { panic!() };
        d.handle_signal(Signal::Resumed(46_000), &doc);
        let raw = gen.generate(&req.prompt, req.timeout);
        let out = d.complete_generation(&req.key, raw, req.doc_kind, 47_000);
        assert!(out.is_empty());
        assert!(d.episodes()[0].notifications.is_empty());
    }

    #[test]
    fn away_email_carries_continuation() {
        let gen = MockGenerator::new(7);
        let doc = WorkDocument::text("A story about the sea and its sailors.");
        let mut d = dispatcher(Condition::Proposed);
        let e = d.handle_signal(Signal::InterruptionDetected(45_000), &doc);
        run(&mut d, e, &gen, 45_000);
        let e = d.handle_signal(Signal::AwayConfirmed(300_000), &doc);
        let [Effect::QueueEmail(mail)] = e.as_slice() else { panic!("{e:?}") };
        assert_eq!(mail.queued_at, 300_000);
        assert_eq!(mail.payload_kind, PayloadKind::Continuation);
        assert_eq!(mail.recipient.as_deref(), Some("w@example.test"));
        assert!(mail.body.starts_with(&mail.headline));
    }

    #[test]
    fn away_without_episode_generates_for_email() {
        let gen = MockGenerator::new(7);
        let doc = WorkDocument::text("A story about the sea.");
        let mut d = dispatcher(Condition::Proposed);
        let e = d.handle_signal(Signal::AwayConfirmed(300_000), &doc);
        let e = run(&mut d, e, &gen, 300_000);
        assert!(matches!(e.as_slice(), [Effect::QueueEmail(m)] if m.episode_id.is_none()));
    }
}
