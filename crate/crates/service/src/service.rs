use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rekindle_core::dispatcher::DispatcherConfig;
use rekindle_core::log::{JsonlWriter, LogRecord, OpenedRecord, SessionLog, SessionMeta};
use rekindle_core::mail::{MailSink, RetryPolicy};
use rekindle_core::metrics::report_from_log;
use rekindle_core::{
    Clock, DocKind, DocumentUpdate, GenerationError, Generator, InteractionEvent,
    Millis, MetricsReport, SessionConfig, SessionId, SystemClock, VirtualClock,
};
use rekindle_core::generation::ImageBackend;
use rekindle_core::{Dispatcher, WorkDocument};
use tokio::sync::mpsc::UnboundedReceiver;

use crate::error::ServiceError;
use crate::messages::{Ack, ServerMessage};
use crate::runtime::{deliver, Deferred, SessionRuntime, Shared};

pub const SESSIONS_DIR: &str = "sessions";
pub const DEFAULT_DISCONNECT_GRACE: Duration = Duration::from_secs(10);
const DEFAULT_QUANTUM_MS: Millis = 100;

pub enum ServiceClock {
    /// Time moves only through [`Service::advance_clock`]; generation and
    /// mail delivery complete inline.
    Virtual(Arc<VirtualClock>),
    System(Arc<SystemClock>),
}

impl ServiceClock {
    pub fn virtual_at_zero() -> Self {
        ServiceClock::Virtual(Arc::new(VirtualClock::new()))
    }

    pub fn system() -> Self {
        ServiceClock::System(Arc::new(SystemClock::new()))
    }
}

/// Counts calls to the wrapped generator.
pub struct CountingGenerator {
    inner: Arc<dyn Generator>,
    calls: AtomicU64,
}

impl CountingGenerator {
    pub fn new(inner: Arc<dyn Generator>) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Generator for CountingGenerator {
    fn generate(&self, prompt: &str, timeout: Duration) -> Result<String, GenerationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(prompt, timeout)
    }
}

pub struct ServiceOptions {
    pub data_dir: PathBuf,
    pub generator: Arc<dyn Generator>,
    pub image_backend: Option<Arc<dyn ImageBackend>>,
    pub dispatcher: DispatcherConfig,
    pub mail_from: String,
    pub mail_sink: Option<Arc<dyn MailSink>>,
    pub retry: RetryPolicy,
    pub disconnect_grace: Duration,
    /// Step size of [`Service::advance_clock`].
    pub quantum_ms: Millis,
}

impl ServiceOptions {
    pub fn new(data_dir: impl Into<PathBuf>, generator: Arc<dyn Generator>) -> Self {
        Self {
            data_dir: data_dir.into(),
            generator,
            image_backend: None,
            dispatcher: DispatcherConfig::default(),
            mail_from: "rekindle@localhost".into(),
            mail_sink: None,
            retry: RetryPolicy::default(),
            disconnect_grace: DEFAULT_DISCONNECT_GRACE,
            quantum_ms: DEFAULT_QUANTUM_MS,
        }
    }
}

type Handle = Arc<Mutex<SessionRuntime>>;

struct Inner {
    shared: Shared,
    virtual_clock: Option<Arc<VirtualClock>>,
    generator: Arc<CountingGenerator>,
    image_backend: Option<Arc<dyn ImageBackend>>,
    dispatcher: DispatcherConfig,
    sessions_dir: PathBuf,
    quantum_ms: Millis,
    sessions: Mutex<BTreeMap<SessionId, Handle>>,
    next_id: AtomicU64,
}

/// Session registry. Cheap to clone; clones share state.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

fn lock(handle: &Handle) -> MutexGuard<'_, SessionRuntime> {
    handle.lock().unwrap_or_else(|p| p.into_inner())
}

fn parse_id(name: &str) -> Option<u64> {
    name.strip_prefix('s')?.strip_suffix(".jsonl")?.parse().ok()
}

impl Service {
    pub fn new(options: ServiceOptions, clock: ServiceClock) -> Result<Self, ServiceError> {
        let sessions_dir = options.data_dir.join(SESSIONS_DIR);
        fs::create_dir_all(&sessions_dir)?;
        let mut max_id = 0;
        for entry in fs::read_dir(&sessions_dir)? {
            if let Some(n) = entry?.file_name().to_str().and_then(parse_id) {
                max_id = max_id.max(n);
            }
        }
        let (clock_dyn, virtual_clock): (Arc<dyn Clock>, _) = match clock {
            ServiceClock::Virtual(v) => (v.clone(), Some(v)),
            ServiceClock::System(s) => (s, None),
        };
        let generator = Arc::new(CountingGenerator::new(options.generator));
        Ok(Self {
            inner: Arc::new(Inner {
                shared: Shared {
                    clock: clock_dyn,
                    inline: virtual_clock.is_some(),
                    generator: generator.clone(),
                    mail_from: options.mail_from,
                    mail_sink: options.mail_sink,
                    retry: options.retry,
                    grace: options.disconnect_grace.as_millis() as Millis,
                },
                virtual_clock,
                generator,
                image_backend: options.image_backend,
                dispatcher: options.dispatcher,
                sessions_dir,
                quantum_ms: options.quantum_ms.max(1),
                sessions: Mutex::new(BTreeMap::new()),
                next_id: AtomicU64::new(max_id + 1),
            }),
        })
    }

    pub fn sessions_dir(&self) -> &Path {
        &self.inner.sessions_dir
    }

    pub fn log_path(&self, id: &SessionId) -> PathBuf {
        self.inner.sessions_dir.join(format!("{id}.jsonl"))
    }

    /// Total calls made to the generator backend.
    pub fn generator_calls(&self) -> u64 {
        self.inner.generator.calls()
    }

    pub fn now_ms(&self) -> Millis {
        self.inner.shared.clock.now_ms()
    }

    pub fn is_virtual(&self) -> bool {
        self.inner.virtual_clock.is_some()
    }

    pub fn open_sessions(&self) -> Vec<SessionId> {
        self.registry().keys().cloned().collect()
    }

    fn registry(&self) -> MutexGuard<'_, BTreeMap<SessionId, Handle>> {
        self.inner.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn handle(&self, id: &SessionId) -> Result<Handle, ServiceError> {
        self.registry()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.clone()))
    }

    pub fn create_session(
        &self,
        config: SessionConfig,
        doc_kind: DocKind,
        recipient: Option<String>,
    ) -> Result<SessionId, ServiceError> {
        let config = config.validate()?;
        let (id, file, n) = loop {
            let n = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
            let id = SessionId::new(format!("s{n:06}"));
            match OpenOptions::new()
                .create_new(true)
                .append(true)
                .open(self.log_path(&id))
            {
                Ok(file) => break (id, file, n),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        };
        let shared = &self.inner.shared;
        let started_at = shared.clock.now_ms();
        let mut dispatcher_cfg = self.inner.dispatcher.clone();
        dispatcher_cfg.encouragements = dispatcher_cfg
            .encouragements
            .clone()
            .with_seed(dispatcher_cfg.encouragements.rng_seed().wrapping_add(n));
        let dispatcher = Dispatcher::new(id.clone(), config.condition, dispatcher_cfg)
            .with_recipient(recipient.clone())
            .with_image_backend(self.inner.image_backend.clone());
        let mut runtime = SessionRuntime::new(
            id.clone(),
            config.clone(),
            doc_kind,
            started_at,
            dispatcher,
            JsonlWriter::new(file),
        );
        runtime.append(&LogRecord::Opened(OpenedRecord {
            session_opened: SessionMeta {
                session_id: id.clone(),
                config,
                doc_kind,
                started_at,
                wall_anchor_unix_ms: shared.clock.wall_anchor_unix_ms() + started_at,
                has_recipient: recipient.is_some(),
            },
        }))?;
        runtime.flush()?;
        tracing::info!(session = %id, "session created");
        self.registry().insert(id.clone(), Arc::new(Mutex::new(runtime)));
        Ok(id)
    }

    /// Runs `f` on the session under its lock, then executes any deferred
    /// work it produced.
    fn with_session<R>(
        &self,
        id: &SessionId,
        f: impl FnOnce(&mut SessionRuntime, &Shared, &mut Vec<Deferred>) -> Result<R, ServiceError>,
    ) -> Result<R, ServiceError> {
        let handle = self.handle(id)?;
        let mut deferred = Vec::new();
        let result = {
            let mut rt = lock(&handle);
            if rt.is_closed() {
                return Err(ServiceError::UnknownSession(id.clone()));
            }
            f(&mut rt, &self.inner.shared, &mut deferred)
        };
        self.spawn_deferred(&handle, deferred);
        result
    }

    pub fn ingest_event(
        &self,
        id: &SessionId,
        ev: InteractionEvent,
    ) -> Result<Ack, ServiceError> {
        self.with_session(id, |rt, shared, out| rt.ingest(shared, ev, out))
    }

    pub fn update_document(
        &self,
        id: &SessionId,
        update: DocumentUpdate,
    ) -> Result<Ack, ServiceError> {
        self.with_session(id, |rt, shared, _| rt.update_document(shared, update))
    }

    /// The server's copy of the session document.
    pub fn document(&self, id: &SessionId) -> Result<WorkDocument, ServiceError> {
        self.with_session(id, |rt, _, _| Ok(rt.document().clone()))
    }

    pub fn config(&self, id: &SessionId) -> Result<SessionConfig, ServiceError> {
        self.with_session(id, |rt, _, _| Ok(rt.config().clone()))
    }

    pub fn set_threshold(&self, id: &SessionId, secs: i64) -> Result<Ack, ServiceError> {
        self.with_session(id, |rt, shared, out| rt.set_threshold(shared, secs, out))
    }

    /// Opens a stream subscription. Dropping the handle counts as a
    /// disconnect; with no subscriber left for the grace period the session
    /// is treated as hidden.
    pub fn connect(&self, id: &SessionId) -> Result<StreamHandle, ServiceError> {
        let handle = self.handle(id)?;
        let (subscriber, rx) = self.with_session(id, |rt, shared, out| rt.subscribe(shared, out))?;
        Ok(StreamHandle {
            service: self.clone(),
            session: handle,
            subscriber,
            rx,
        })
    }

    pub fn subscriber_count(&self, id: &SessionId) -> Result<usize, ServiceError> {
        self.with_session(id, |rt, _, _| Ok(rt.subscriber_count()))
    }

    /// Runs timers and idle checks for every open session at the current time.
    pub fn tick(&self) -> Result<(), ServiceError> {
        let handles: Vec<(SessionId, Handle)> = self
            .registry()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for (id, handle) in handles {
            let mut deferred = Vec::new();
            {
                let mut rt = lock(&handle);
                if rt.is_closed() {
                    continue;
                }
                if let Err(err) = rt.tick(&self.inner.shared, &mut deferred) {
                    tracing::error!(session = %id, %err, "tick failed");
                    return Err(err);
                }
            }
            self.spawn_deferred(&handle, deferred);
        }
        Ok(())
    }

    /// Advances the virtual clock by `by` ms in quantum steps, ticking every
    /// session after each step. Returns the new clock reading.
    pub fn advance_clock(&self, by: Millis) -> Result<Millis, ServiceError> {
        let clock = self
            .inner
            .virtual_clock
            .as_ref()
            .ok_or(ServiceError::VirtualClockRequired)?;
        let target = clock.now_ms() + by;
        while clock.now_ms() < target {
            let step = (clock.now_ms() + self.inner.quantum_ms).min(target);
            clock.advance_to(step);
            self.tick()?;
        }
        Ok(clock.now_ms())
    }

    /// Closes the session and returns its metrics. The in-memory document is
    /// dropped; it reaches disk only for sessions that retain content.
    pub fn end_session(&self, id: &SessionId) -> Result<MetricsReport, ServiceError> {
        let handle = self
            .registry()
            .remove(id)
            .ok_or_else(|| ServiceError::UnknownSession(id.clone()))?;
        let mut deferred = Vec::new();
        let report = lock(&handle).close(&self.inner.shared, &mut deferred);
        if !deferred.is_empty() {
            tracing::warn!(session = %id, n = deferred.len(), "work queued at session end dropped");
        }
        tracing::info!(session = %id, "session ended");
        report
    }

    /// Recomputes reports for every ended session found under the data
    /// directory, in session id order.
    pub fn replay_reports(data_dir: &Path) -> Result<Vec<MetricsReport>, ServiceError> {
        let dir = data_dir.join(SESSIONS_DIR);
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut reports = Vec::new();
        for path in paths {
            let log = SessionLog::read(&path)?;
            if log.ended_at().is_some() {
                reports.push(report_from_log(&log)?);
            }
        }
        Ok(reports)
    }

    fn spawn_deferred(&self, handle: &Handle, deferred: Vec<Deferred>) {
        for work in deferred {
            let service = self.clone();
            let handle = handle.clone();
            std::thread::spawn(move || service.run_deferred(&handle, work));
        }
    }

    fn run_deferred(&self, handle: &Handle, work: Deferred) {
        let shared = &self.inner.shared;
        let mut more = Vec::new();
        let outcome = match work {
            Deferred::Generate { request } => {
                let started = Instant::now();
                let result = shared.generator.generate(&request.prompt, request.timeout);
                let latency = started.elapsed().as_millis() as Millis;
                lock(handle).complete_deferred(shared, &request, result, latency, &mut more)
            }
            Deferred::Email(email) => {
                let record = deliver(shared, &email, &mut std::thread::sleep);
                lock(handle).record_email(&email, record)
            }
        };
        if let Err(err) = outcome {
            tracing::error!(%err, "background session work failed");
        }
        self.spawn_deferred(handle, more);
    }
}

/// A live stream subscription. Dropping it disconnects.
pub struct StreamHandle {
    service: Service,
    session: Handle,
    subscriber: u64,
    rx: UnboundedReceiver<ServerMessage>,
}

impl StreamHandle {
    pub async fn recv(&mut self) -> Option<ServerMessage> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<ServerMessage> {
        self.rx.try_recv().ok()
    }

    /// Drains every message already delivered.
    pub fn drain(&mut self) -> Vec<ServerMessage> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }
}

impl Drop for StreamHandle {
    fn drop(&mut self) {
        let mut rt = lock(&self.session);
        rt.unsubscribe(&self.service.inner.shared, self.subscriber);
    }
}
