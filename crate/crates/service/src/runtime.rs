//! Per-session state and effect execution.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::sync::Arc;
use std::time::Duration;

use rekindle_core::dispatcher::GenerationRequest;
use rekindle_core::generation::content_ref;
use rekindle_core::log::{
    CloseSummary, ClosedRecord, DocumentRecord, DocumentSummary, EmailEntry, EmailRecord,
    GenerationEntry, GenerationOutcome, GenerationRecord, JsonlWriter, LogRecord,
    NotificationEntry, NotificationRecord, SignalRecord, ThresholdRecord,
};
use rekindle_core::mail::{send_email, DeliveryRecord, DeliveryStatus, MailSink, RetryPolicy};
use rekindle_core::metrics::{compute_report, ConfigTimeline};
use rekindle_core::{
    AwayEmail, Clock, ConfigError, DetectorState, DocKind, DocumentUpdate, Effect, EventKind,
    GenerationError, Generator, InteractionEvent, Millis, MetricsReport, SessionConfig, SessionId,
    Signal, TimerId, TimerQueue, WorkDocument,
};
use rekindle_core::Dispatcher;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

use crate::error::ServiceError;
use crate::messages::{Ack, ServerMessage};

/// Service-wide collaborators every session uses.
pub(crate) struct Shared {
    pub clock: Arc<dyn Clock>,
    /// Generation and mail run inline, without real waiting.
    pub inline: bool,
    pub generator: Arc<dyn Generator>,
    pub mail_from: String,
    pub mail_sink: Option<Arc<dyn MailSink>>,
    pub retry: RetryPolicy,
    pub grace: Millis,
}

/// Slow work handed back to the caller to run off the session lock.
pub(crate) enum Deferred {
    Generate {
        request: GenerationRequest,
    },
    Email(AwayEmail),
}

enum Timer {
    DisconnectGrace,
}

pub(crate) struct SessionRuntime {
    id: SessionId,
    config: SessionConfig,
    timeline: ConfigTimeline,
    started_at: Millis,
    detector: DetectorState,
    dispatcher: Dispatcher,
    document: WorkDocument,
    events: Vec<InteractionEvent>,
    writer: JsonlWriter<File>,
    subscribers: BTreeMap<u64, UnboundedSender<ServerMessage>>,
    next_subscriber: u64,
    timers: TimerQueue<Timer>,
    grace_timer: Option<TimerId>,
    hidden_by_disconnect: bool,
    closed: bool,
}

impl SessionRuntime {
    pub fn new(
        id: SessionId,
        config: SessionConfig,
        doc_kind: DocKind,
        started_at: Millis,
        dispatcher: Dispatcher,
        writer: JsonlWriter<File>,
    ) -> Self {
        Self {
            id,
            timeline: ConfigTimeline::new(config.clone()),
            config,
            started_at,
            detector: DetectorState::new(0),
            dispatcher,
            document: WorkDocument::empty(doc_kind),
            events: Vec::new(),
            writer,
            subscribers: BTreeMap::new(),
            next_subscriber: 0,
            timers: TimerQueue::new(),
            grace_timer: None,
            hidden_by_disconnect: false,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn now(&self, shared: &Shared) -> Millis {
        shared.clock.now_ms().saturating_sub(self.started_at)
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), ServiceError> {
        self.writer.append(record)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), ServiceError> {
        self.writer.flush()?;
        Ok(())
    }

    pub fn ingest(
        &mut self,
        shared: &Shared,
        ev: InteractionEvent,
        out: &mut Vec<Deferred>,
    ) -> Result<Ack, ServiceError> {
        if ev.session_id != self.id {
            return Err(ServiceError::SessionMismatch {
                expected: self.id.clone(),
                found: ev.session_id,
            });
        }
        ev.validate()?;
        if let Some(last) = self.detector.last_event_at() {
            if ev.at < last {
                tracing::warn!(session = %self.id, at = ev.at, last, "rejected out-of-order event");
                return Err(rekindle_core::DetectorError::OutOfOrderEvent { at: ev.at, last }.into());
            }
        }
        let now = self.now(shared);
        // Deadlines that passed before the event's own time fire first.
        self.run_timers(shared, ev.at.min(now), out)?;
        self.tick_detector(shared, ev.at.min(now), out)?;
        self.accept(shared, ev.clone(), out)?;
        self.flush()?;
        Ok(Ack {
            at: ev.at,
            server_received_at: now,
        })
    }

    fn accept(
        &mut self,
        shared: &Shared,
        ev: InteractionEvent,
        out: &mut Vec<Deferred>,
    ) -> Result<(), ServiceError> {
        let signals = self.detector.on_event(&ev, &self.config)?;
        self.append(&LogRecord::Event(ev.clone()))?;
        self.events.push(ev);
        self.handle_signals(shared, signals, out)
    }

    fn synthesize(
        &mut self,
        shared: &Shared,
        at: Millis,
        kind: EventKind,
        out: &mut Vec<Deferred>,
    ) -> Result<(), ServiceError> {
        let at = self.detector.last_event_at().map_or(at, |last| at.max(last));
        tracing::info!(session = %self.id, at, ?kind, "synthesized visibility event");
        self.accept(shared, InteractionEvent::new(self.id.clone(), at, kind), out)
    }

    pub fn tick(&mut self, shared: &Shared, out: &mut Vec<Deferred>) -> Result<(), ServiceError> {
        let now = self.now(shared);
        self.run_timers(shared, now, out)?;
        self.tick_detector(shared, now, out)?;
        self.flush()
    }

    fn run_timers(
        &mut self,
        shared: &Shared,
        now: Millis,
        out: &mut Vec<Deferred>,
    ) -> Result<(), ServiceError> {
        for (due, timer) in self.timers.pop_due(now) {
            match timer {
                Timer::DisconnectGrace => {
                    self.grace_timer = None;
                    self.tick_detector(shared, due, out)?;
                    self.synthesize(shared, due, EventKind::PageHidden, out)?;
                    self.hidden_by_disconnect = true;
                }
            }
        }
        Ok(())
    }

    fn tick_detector(
        &mut self,
        shared: &Shared,
        at: Millis,
        out: &mut Vec<Deferred>,
    ) -> Result<(), ServiceError> {
        let signals = self.detector.on_tick(at, &self.config);
        self.handle_signals(shared, signals, out)
    }

    fn handle_signals(
        &mut self,
        shared: &Shared,
        signals: Vec<Signal>,
        out: &mut Vec<Deferred>,
    ) -> Result<(), ServiceError> {
        for signal in signals {
            let at = signal.at();
            self.append(&LogRecord::Signal(SignalRecord {
                at,
                signal_kind: signal.kind(),
            }))?;
            let effects = self.dispatcher.handle_signal(signal, &self.document);
            self.run_effects(shared, effects, at, out)?;
        }
        Ok(())
    }

    fn run_effects(
        &mut self,
        shared: &Shared,
        effects: Vec<Effect>,
        at: Millis,
        out: &mut Vec<Deferred>,
    ) -> Result<(), ServiceError> {
        let mut queue: VecDeque<Effect> = effects.into();
        while let Some(effect) = queue.pop_front() {
            match effect {
                Effect::Notify {
                    at,
                    episode_id,
                    payload,
                    continuation,
                } => {
                    let fallback = self
                        .dispatcher
                        .episodes()
                        .iter()
                        .rev()
                        .find(|e| e.episode_id == episode_id)
                        .is_some_and(|e| e.fallback);
                    self.append(&LogRecord::Notification(NotificationRecord {
                        at,
                        notification: NotificationEntry {
                            episode_id: episode_id.clone(),
                            payload_kind: payload.payload_kind,
                            headline: self
                                .config
                                .retain_content
                                .then(|| payload.headline.clone()),
                            headline_chars: payload.headline.chars().count(),
                            continuation_ref: payload.continuation_ref.clone(),
                            fallback,
                        },
                    }))?;
                    self.detector.note_prompt(at);
                    self.broadcast(ServerMessage::Notification {
                        at,
                        headline: payload.headline,
                        payload_kind: payload.payload_kind,
                        episode_id: episode_id.clone(),
                    });
                    if let Some(c) = continuation {
                        self.broadcast(ServerMessage::Continuation {
                            episode_id,
                            continuation_ref: c.reference,
                            body: c.body,
                        });
                    }
                }
                Effect::AppendSlide {
                    episode_id, slide, ..
                } => self.broadcast(ServerMessage::Patch {
                    episode_id,
                    update: DocumentUpdate::AppendSlide(slide),
                }),
                Effect::Generate(request) => {
                    if shared.inline {
                        let result = shared.generator.generate(&request.prompt, request.timeout);
                        let more = self.finish_generation(&request, result, at, 0)?;
                        queue.extend(more);
                    } else {
                        out.push(Deferred::Generate { request });
                    }
                }
                Effect::QueueEmail(email) => {
                    if shared.inline {
                        let record = deliver(shared, &email, &mut |_| {});
                        self.record_email(&email, record)?;
                    } else {
                        out.push(Deferred::Email(email));
                    }
                }
            }
        }
        Ok(())
    }

    /// Logs a generation outcome and feeds it to the dispatcher, returning
    /// the follow-up effects.
    fn finish_generation(
        &mut self,
        request: &GenerationRequest,
        result: Result<String, GenerationError>,
        at: Millis,
        latency_ms: Millis,
    ) -> Result<Vec<Effect>, ServiceError> {
        let (outcome, continuation_ref) = match &result {
            Ok(raw) => (GenerationOutcome::Ok, Some(content_ref(raw))),
            Err(GenerationError::BackendTimeout(_)) => (GenerationOutcome::Timeout, None),
            Err(_) => (GenerationOutcome::Error, None),
        };
        self.append(&LogRecord::Generation(GenerationRecord {
            at,
            generation: GenerationEntry {
                outcome,
                continuation_ref,
                latency_ms,
            },
        }))?;
        Ok(self
            .dispatcher
            .complete_generation(&request.key, result, request.doc_kind, at))
    }

    /// Completion path for generations that ran off the session lock.
    pub fn complete_deferred(
        &mut self,
        shared: &Shared,
        request: &GenerationRequest,
        result: Result<String, GenerationError>,
        latency_ms: Millis,
        out: &mut Vec<Deferred>,
    ) -> Result<(), ServiceError> {
        if self.closed {
            return Ok(());
        }
        let at = self.now(shared).max(self.detector.last_event_at().unwrap_or(0));
        let effects = self.finish_generation(request, result, at, latency_ms)?;
        self.run_effects(shared, effects, at, out)?;
        self.flush()
    }

    pub fn record_email(
        &mut self,
        email: &AwayEmail,
        delivery: DeliveryRecord,
    ) -> Result<(), ServiceError> {
        if self.closed {
            tracing::warn!(session = %self.id, status = ?delivery.status, "email finished after session end; not logged");
            return Ok(());
        }
        self.append(&LogRecord::Email(EmailRecord {
            at: email.queued_at,
            email: EmailEntry {
                episode_id: email.episode_id.clone(),
                payload_kind: email.payload_kind,
                delivery,
            },
        }))?;
        self.flush()
    }

    fn broadcast(&mut self, msg: ServerMessage) {
        self.subscribers.retain(|_, tx| tx.send(msg.clone()).is_ok());
    }

    pub fn update_document(
        &mut self,
        shared: &Shared,
        update: DocumentUpdate,
    ) -> Result<Ack, ServiceError> {
        self.document.apply(update)?;
        let now = self.now(shared);
        let summary = DocumentSummary::of(&self.document, self.config.retain_content);
        self.append(&LogRecord::Document(DocumentRecord {
            at: now,
            document: summary,
        }))?;
        self.flush()?;
        Ok(Ack {
            at: now,
            server_received_at: now,
        })
    }

    pub fn document(&self) -> &WorkDocument {
        &self.document
    }

    pub fn set_threshold(
        &mut self,
        shared: &Shared,
        secs: i64,
        out: &mut Vec<Deferred>,
    ) -> Result<Ack, ServiceError> {
        if secs <= 0 {
            return Err(ConfigError::NonPositiveDuration("idle_threshold_t").into());
        }
        let now = self.now(shared);
        self.config.idle_threshold_t = secs;
        self.timeline.push_threshold(now, secs);
        self.append(&LogRecord::Threshold(ThresholdRecord {
            at: now,
            idle_threshold_t: secs,
        }))?;
        self.tick(shared, out)?;
        Ok(Ack {
            at: now,
            server_received_at: now,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn subscribe(
        &mut self,
        shared: &Shared,
        out: &mut Vec<Deferred>,
    ) -> Result<(u64, UnboundedReceiver<ServerMessage>), ServiceError> {
        if let Some(timer) = self.grace_timer.take() {
            self.timers.cancel(timer);
        }
        if self.hidden_by_disconnect {
            self.hidden_by_disconnect = false;
            let now = self.now(shared);
            self.tick_detector(shared, now, out)?;
            self.synthesize(shared, now, EventKind::PageVisible, out)?;
            self.flush()?;
        }
        let (tx, rx) = unbounded_channel();
        let id = self.next_subscriber;
        self.next_subscriber += 1;
        self.subscribers.insert(id, tx);
        Ok((id, rx))
    }

    pub fn unsubscribe(&mut self, shared: &Shared, subscriber: u64) {
        self.subscribers.remove(&subscriber);
        if self.subscribers.is_empty() && !self.closed && self.grace_timer.is_none() {
            let at = self.now(shared) + shared.grace;
            self.grace_timer = Some(self.timers.schedule(at, Timer::DisconnectGrace));
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.len()
    }

    /// Ends the session: final tick, closing record, content discarded.
    pub fn close(
        &mut self,
        shared: &Shared,
        out: &mut Vec<Deferred>,
    ) -> Result<MetricsReport, ServiceError> {
        self.tick(shared, out)?;
        let now = self.now(shared);
        self.append(&LogRecord::Closed(ClosedRecord {
            at: now,
            session_closed: CloseSummary {
                accepted_events: self.events.len() as u64,
            },
        }))?;
        self.flush()?;
        self.closed = true;
        self.subscribers.clear();
        self.document = WorkDocument::empty(self.document.kind());
        let report = compute_report(
            self.id.clone(),
            &self.timeline,
            self.dispatcher.episodes(),
            &self.events,
            Some(now),
        )?;
        Ok(report)
    }
}

pub(crate) fn deliver(
    shared: &Shared,
    email: &AwayEmail,
    sleep: &mut dyn FnMut(Duration),
) -> DeliveryRecord {
    match &shared.mail_sink {
        Some(sink) => send_email(email, &shared.mail_from, sink.as_ref(), shared.retry, sleep),
        None => DeliveryRecord {
            status: DeliveryStatus::Skipped,
            attempts: 0,
            queued_at: email.queued_at,
            reason: Some("no mail sink configured".into()),
        },
    }
}
