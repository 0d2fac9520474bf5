//! Away-email delivery.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use lettre::message::Mailbox;
use lettre::transport::smtp::authentication::Credentials;
use lettre::{Message, SmtpTransport, Transport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatcher::AwayEmail;
use crate::Millis;

#[derive(Debug, Error)]
pub enum MailError {
    #[error("mail sink I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid address `{0}`")]
    Address(String),
    #[error("building message: {0}")]
    Build(String),
    #[error("smtp: {0}")]
    Smtp(String),
    #[error("mail setting `{0}` is missing")]
    MissingSetting(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailMessage {
    pub from: String,
    pub to: String,
    pub subject: String,
    pub body: String,
    pub queued_at: Millis,
}

pub trait MailSink: Send + Sync {
    fn deliver(&self, msg: &EmailMessage) -> Result<(), MailError>;
}

/// Writes one RFC 822 style file per message into a directory.
#[derive(Debug)]
pub struct FileMailSink {
    dir: PathBuf,
    seq: AtomicU64,
}

impl FileMailSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, MailError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            seq: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl MailSink for FileMailSink {
    fn deliver(&self, msg: &EmailMessage) -> Result<(), MailError> {
        let n = self.seq.fetch_add(1, Ordering::SeqCst) + 1;
        let content = format!(
            "From: {}\r\nTo: {}\r\nSubject: {}\r\nX-Queued-At-Ms: {}\r\nContent-Type: text/plain; charset=utf-8\r\n\r\n{}\r\n",
            msg.from, msg.to, msg.subject, msg.queued_at, msg.body
        );
        fs::write(self.dir.join(format!("{n:06}.eml")), content)?;
        Ok(())
    }
}

/// SMTP delivery. Settings come from `SMTP_HOST`, `SMTP_PORT` (default 25),
/// `SMTP_USER` and `SMTP_PASSWORD` (optional, both or neither).
pub struct SmtpMailSink {
    transport: SmtpTransport,
}

impl SmtpMailSink {
    pub fn new(host: &str, port: u16, credentials: Option<(String, String)>) -> Self {
        let mut builder = SmtpTransport::builder_dangerous(host).port(port);
        if let Some((user, pass)) = credentials {
            builder = builder.credentials(Credentials::new(user, pass));
        }
        Self {
            transport: builder.build(),
        }
    }

    pub fn from_env() -> Result<Self, MailError> {
        let host = std::env::var("SMTP_HOST").map_err(|_| MailError::MissingSetting("SMTP_HOST"))?;
        let port = std::env::var("SMTP_PORT")
            .ok()
            .and_then(|p| p.parse().ok())
            .unwrap_or(25);
        let creds = match (std::env::var("SMTP_USER"), std::env::var("SMTP_PASSWORD")) {
            (Ok(u), Ok(p)) => Some((u, p)),
            _ => None,
        };
        Ok(Self::new(&host, port, creds))
    }
}

impl MailSink for SmtpMailSink {
    fn deliver(&self, msg: &EmailMessage) -> Result<(), MailError> {
        let parse = |a: &str| a.parse::<Mailbox>().map_err(|_| MailError::Address(a.to_string()));
        let email = Message::builder()
            .from(parse(&msg.from)?)
            .to(parse(&msg.to)?)
            .subject(msg.subject.clone())
            .body(msg.body.clone())
            .map_err(|e| MailError::Build(e.to_string()))?;
        self.transport
            .send(&email)
            .map(|_| ())
            .map_err(|e| MailError::Smtp(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry `n` (1-based): base, 2·base, 4·base, ...
    pub fn delay(&self, n: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(n.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryStatus {
    Sent,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub status: DeliveryStatus,
    pub attempts: u32,
    pub queued_at: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Delivers `email`, retrying failures with exponential backoff. `sleep` is
/// called between attempts; virtual-clock callers pass a no-op.
pub fn send_email(
    email: &AwayEmail,
    from: &str,
    sink: &dyn MailSink,
    policy: RetryPolicy,
    sleep: &mut dyn FnMut(Duration),
) -> DeliveryRecord {
    let Some(to) = email.recipient.clone() else {
        tracing::info!(queued_at = email.queued_at, "away email skipped: no recipient registered");
        return DeliveryRecord {
            status: DeliveryStatus::Skipped,
            attempts: 0,
            queued_at: email.queued_at,
            reason: Some("no recipient registered".into()),
        };
    };
    let msg = EmailMessage {
        from: from.to_string(),
        to,
        subject: email.headline.clone(),
        body: email.body.clone(),
        queued_at: email.queued_at,
    };
    let mut attempts = 0;
    loop {
        attempts += 1;
        match sink.deliver(&msg) {
            Ok(()) => {
                return DeliveryRecord {
                    status: DeliveryStatus::Sent,
                    attempts,
                    queued_at: email.queued_at,
                    reason: None,
                }
            }
            Err(err) if attempts <= policy.max_retries => {
                tracing::warn!(%err, attempt = attempts, "away email delivery failed, retrying");
                sleep(policy.delay(attempts));
            }
            Err(err) => {
                tracing::error!(%err, attempts, "away email delivery failed");
                return DeliveryRecord {
                    status: DeliveryStatus::Failed,
                    attempts,
                    queued_at: email.queued_at,
                    reason: Some(err.to_string()),
                };
            }
        }
    }
}
