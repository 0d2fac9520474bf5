use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rekindle_core::generation::{MockGenerator, MockImageBackend};
use rekindle_core::mail::FileMailSink;
use rekindle_core::metrics::write_csv;
use rekindle_core::{
    DocKind, DocumentUpdate, EventKind, InteractionEvent, Millis, MetricsReport, SessionId, Slide,
    WorkDocument,
};
use rekindle_service::{ServerMessage, Service, ServiceClock, ServiceOptions, StreamHandle};

use crate::scenario::{Phase, Scenario, KEY_CHUNK_MS};
use crate::SimError;

const WAIT_STEP_MS: Millis = 100;
const MAX_WAIT_MS: Millis = 24 * 3_600_000;
const WORDS: [&str; 24] = [
    "the", "harbor", "evening", "letters", "quiet", "river", "market", "notes", "winter", "light",
    "station", "garden", "paper", "morning", "story", "window", "bridge", "signal", "memory",
    "orchard", "lantern", "field", "chapter", "voice",
];

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub data_dir: PathBuf,
    pub generator_seed: u64,
    /// Attach mock image references to generated slides.
    pub images: bool,
    /// Directory for delivered away emails; none means emails are skipped.
    pub outbox: Option<PathBuf>,
}

impl SuiteConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            generator_seed: 0,
            images: false,
            outbox: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub session_id: SessionId,
    pub report: MetricsReport,
    pub log_path: PathBuf,
    /// Generator calls made while this scenario ran.
    pub generator_calls: u64,
}

/// A virtual-clock service plus the scenarios played against it.
pub struct Simulator {
    service: Service,
}

impl Simulator {
    pub fn new(config: &SuiteConfig) -> Result<Self, SimError> {
        let mut options = ServiceOptions::new(
            &config.data_dir,
            Arc::new(MockGenerator::new(config.generator_seed)),
        );
        options.dispatcher.encouragements = options
            .dispatcher
            .encouragements
            .with_seed(config.generator_seed);
        if config.images {
            options.image_backend = Some(Arc::new(MockImageBackend));
        }
        if let Some(dir) = &config.outbox {
            options.mail_sink = Some(Arc::new(
                FileMailSink::new(dir).map_err(|e| std::io::Error::other(e.to_string()))?,
            ));
        }
        let service = Service::new(options, ServiceClock::virtual_at_zero())?;
        Ok(Self { service })
    }

    /// Wraps an existing service, which must run on the virtual clock.
    pub fn with_service(service: Service) -> Self {
        Self { service }
    }

    pub fn service(&self) -> &Service {
        &self.service
    }

    pub fn run(&self, scenario: &Scenario) -> Result<SimOutcome, SimError> {
        run_scenario(&self.service, scenario)
    }
}

pub fn run_suite(scenarios: &[Scenario], config: &SuiteConfig) -> Result<Vec<SimOutcome>, SimError> {
    let sim = Simulator::new(config)?;
    scenarios.iter().map(|s| sim.run(s)).collect()
}

pub fn write_report_csv(path: &Path, reports: &[MetricsReport]) -> Result<(), SimError> {
    write_csv(reports, File::create(path)?)?;
    Ok(())
}

/// Plays `scenario` as one session and ends it.
pub fn run_scenario(service: &Service, scenario: &Scenario) -> Result<SimOutcome, SimError> {
    scenario.validate()?;
    let calls_before = service.generator_calls();
    let id = service.create_session(
        scenario.session_config(),
        scenario.doc_kind,
        scenario.recipient.clone(),
    )?;
    let stream = service.connect(&id)?;
    let mut worker = Worker {
        service,
        id: id.clone(),
        stream,
        rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        doc: WorkDocument::empty(scenario.doc_kind),
        now: 0,
        pending_first: None,
    };
    if let Some(text) = &scenario.initial_text {
        worker.doc = match scenario.doc_kind {
            DocKind::Text => WorkDocument::text(text.clone()),
            DocKind::SlideDeck => {
                WorkDocument::deck(vec![Slide::new("Overview").with_items([text.clone()])])
            }
        };
        worker.push_document()?;
    }
    for (index, phase) in scenario.script.iter().enumerate() {
        worker.play(index, phase)?;
    }
    worker.advance_to(worker.now + scenario.tail_ms)?;
    drop(worker.stream);
    let report = service.end_session(&id)?;
    Ok(SimOutcome {
        log_path: service.log_path(&id),
        session_id: id,
        report,
        generator_calls: service.generator_calls() - calls_before,
    })
}

struct Worker<'a> {
    service: &'a Service,
    id: SessionId,
    stream: StreamHandle,
    rng: ChaCha8Rng,
    doc: WorkDocument,
    now: Millis,
    /// First notification since the worker last interacted.
    pending_first: Option<Millis>,
}

impl Worker<'_> {
    fn collect(&mut self) {
        for msg in self.stream.drain() {
            if let ServerMessage::Notification { at, .. } = msg {
                self.pending_first.get_or_insert(at);
            }
        }
    }

    fn advance_to(&mut self, t: Millis) -> Result<(), SimError> {
        if t > self.now {
            self.service.advance_clock(t - self.now)?;
            self.now = t;
        }
        self.collect();
        Ok(())
    }

    fn send(&mut self, kind: EventKind, chars_delta: i64) -> Result<(), SimError> {
        let mut ev = InteractionEvent::new(self.id.clone(), self.now, kind);
        ev.chars_delta = chars_delta;
        self.service.ingest_event(&self.id, ev)?;
        if kind.is_interaction() {
            self.pending_first = None;
        }
        self.collect();
        Ok(())
    }

    fn push_document(&mut self) -> Result<(), SimError> {
        self.service
            .update_document(&self.id, DocumentUpdate::Replace(self.doc.clone()))?;
        Ok(())
    }

    fn play(&mut self, index: usize, phase: &Phase) -> Result<(), SimError> {
        match phase {
            Phase::Work {
                duration_ms,
                chars_per_10s,
            } => {
                let start = self.now;
                let mut elapsed = 0;
                while elapsed < *duration_ms {
                    let chunk = KEY_CHUNK_MS.min(duration_ms - elapsed);
                    elapsed += chunk;
                    self.advance_to(start + elapsed)?;
                    let chars = (*chars_per_10s as u64 * chunk / KEY_CHUNK_MS) as usize;
                    let typed = self.type_chars(chars, elapsed / KEY_CHUNK_MS);
                    if typed > 0 {
                        self.push_document()?;
                    }
                    self.send(EventKind::Key, typed as i64)?;
                }
            }
            Phase::Distract { duration_ms } => {
                if let Some(d) = duration_ms {
                    self.advance_to(self.now + d)?;
                }
            }
            Phase::ReactToNotification { delay_ms, then } => {
                let waited_from = self.now;
                while self.pending_first.is_none() {
                    if self.now - waited_from >= MAX_WAIT_MS {
                        return Err(SimError::NoNotification {
                            phase: index,
                            waited_ms: MAX_WAIT_MS,
                        });
                    }
                    self.advance_to(self.now + WAIT_STEP_MS)?;
                }
                let first = self.pending_first.unwrap_or(self.now);
                self.advance_to((first + delay_ms).max(self.now))?;
                self.send(EventKind::Click, 0)?;
                if let Some(next) = then {
                    self.play(index, next)?;
                }
            }
            Phase::Away { duration_ms } => {
                self.send(EventKind::PageHidden, 0)?;
                self.advance_to(self.now + duration_ms)?;
                self.send(EventKind::PageVisible, 0)?;
            }
            Phase::Delete { chars } => {
                let removed = self.delete_chars(*chars as usize);
                if removed > 0 {
                    self.push_document()?;
                }
                self.send(EventKind::Key, -(removed as i64))?;
            }
            Phase::SetThreshold { idle_threshold_t } => {
                self.service.set_threshold(&self.id, *idle_threshold_t)?;
                self.collect();
            }
        }
        Ok(())
    }

    fn words(&mut self, chars: usize, leading_space: bool) -> String {
        let mut out = String::new();
        while out.chars().count() < chars + usize::from(leading_space) {
            if !out.is_empty() || leading_space {
                out.push(' ');
            }
            out.push_str(WORDS.choose(&mut self.rng).expect("non-empty"));
        }
        out.chars().take(chars).collect()
    }

    /// Appends `chars` characters; returns how many were typed.
    fn type_chars(&mut self, chars: usize, chunk_no: u64) -> usize {
        if chars == 0 {
            return 0;
        }
        match &self.doc {
            WorkDocument::Text { text } => {
                let lead = !text.is_empty();
                let added = self.words(chars, lead);
                if let WorkDocument::Text { text } = &mut self.doc {
                    text.push_str(&added);
                }
            }
            WorkDocument::SlideDeck { slides } => {
                let new_slide = slides.is_empty() || chunk_no % 3 == 1;
                let added = self.words(chars, false);
                if let WorkDocument::SlideDeck { slides } = &mut self.doc {
                    match slides.last_mut() {
                        Some(last) if !new_slide => last.body_items.push(added),
                        _ => slides.push(Slide::new(added)),
                    }
                }
            }
        }
        chars
    }

    /// Removes up to `chars` trailing characters; returns how many went.
    fn delete_chars(&mut self, chars: usize) -> usize {
        fn trim(s: &mut String, n: usize) -> usize {
            let len = s.chars().count();
            let keep = len.saturating_sub(n);
            *s = s.chars().take(keep).collect();
            len - keep
        }
        match &mut self.doc {
            WorkDocument::Text { text } => trim(text, chars),
            WorkDocument::SlideDeck { slides } => {
                let Some(last) = slides.last_mut() else {
                    return 0;
                };
                match last.body_items.last_mut() {
                    Some(item) => {
                        let removed = trim(item, chars);
                        if item.is_empty() {
                            last.body_items.pop();
                        }
                        removed
                    }
                    None => 0,
                }
            }
        }
    }
}
