//! Deterministic scripted workers.
//!
//! A [`Scenario`] is a list of phases played against the service under the
//! virtual clock. Work phases type, distractions stay silent, reactions click
//! a fixed delay after the first pending notification. Everything goes
//! through the public [`rekindle_service::Service`] API.

mod fuzz;
mod run;
mod scenario;

pub use fuzz::fuzz_scenarios;
pub use run::{run_scenario, run_suite, write_report_csv, SimOutcome, Simulator, SuiteConfig};
pub use scenario::{Phase, Scenario, ScenarioError, KEY_CHUNK_MS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Service(#[from] rekindle_service::ServiceError),
    #[error("no notification arrived within {waited_ms} ms of phase {phase}")]
    NoNotification { phase: usize, waited_ms: u64 },
    #[error("fuzzing needs at least one scenario")]
    EmptyRequest,
    #[error("report export: {0}")]
    Metrics(#[from] rekindle_core::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
}
