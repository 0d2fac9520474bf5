use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use rekindle_core::generation::{GeneratorBackend, MockImageBackend, RemoteConfig};
use rekindle_core::mail::{FileMailSink, MailSink, SmtpMailSink};
use rekindle_service::{http, Service, ServiceClock, ServiceOptions};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Remote,
}

#[derive(Debug, Parser)]
#[command(name = "rekindle-server", about = "Session intervention service")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory holding session logs.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    backend: Backend,
    /// Seed of the mock generator and the encouragement picker.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Idle-check period in milliseconds (system clock only).
    #[arg(long, default_value_t = 1000)]
    tick_ms: u64,
    /// Start at virtual time 0 and advance only via POST /clock/advance.
    #[arg(long)]
    virtual_clock: bool,
    /// Write away emails as files here instead of using SMTP.
    #[arg(long)]
    outbox: Option<PathBuf>,
    /// Attach mock image references to generated slides.
    #[arg(long)]
    images: bool,
}

fn mail_sink(args: &Args) -> anyhow_lite::Result<Option<Arc<dyn MailSink>>> {
    if let Some(dir) = &args.outbox {
        return Ok(Some(Arc::new(FileMailSink::new(dir)?)));
    }
    if std::env::var_os("SMTP_HOST").is_some() {
        return Ok(Some(Arc::new(SmtpMailSink::from_env()?)));
    }
    Ok(None)
}

fn backend(args: &Args) -> anyhow_lite::Result<GeneratorBackend> {
    Ok(match args.backend {
        Backend::Mock => GeneratorBackend::DeterministicMock {
            seed: args.seed,
            latency_ms: 0,
        },
        Backend::Remote => {
            let endpoint = std::env::var("GENERATOR_ENDPOINT")
                .map_err(|_| "GENERATOR_ENDPOINT must be set for --backend remote")?;
            let mut cfg = RemoteConfig::new(endpoint);
            if let Ok(name) = std::env::var("GENERATOR_API_KEY_ENV") {
                cfg.api_key_env = name;
            }
            if let Ok(v) = std::env::var("GENERATOR_MAX_TOKENS") {
                cfg.max_tokens = v.parse().map_err(|_| "GENERATOR_MAX_TOKENS must be an integer")?;
            }
            if let Ok(v) = std::env::var("GENERATOR_TEMPERATURE") {
                cfg.temperature = v.parse().map_err(|_| "GENERATOR_TEMPERATURE must be a number")?;
            }
            GeneratorBackend::RemoteHttp(cfg)
        }
    })
}

mod anyhow_lite {
    pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error + Send + Sync>>;
}

#[tokio::main]
async fn main() -> anyhow_lite::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();

    let mut options = ServiceOptions::new(&args.data_dir, Arc::from(backend(&args)?.build()));
    options.mail_sink = mail_sink(&args)?;
    if let Ok(from) = std::env::var("MAIL_FROM") {
        options.mail_from = from;
    }
    options.dispatcher.encouragements = options.dispatcher.encouragements.with_seed(args.seed);
    if args.images {
        options.image_backend = Some(Arc::new(MockImageBackend));
    }
    let clock = if args.virtual_clock {
        ServiceClock::virtual_at_zero()
    } else {
        ServiceClock::system()
    };
    let service = Service::new(options, clock)?;

    if !args.virtual_clock {
        let ticker = service.clone();
        let period = Duration::from_millis(args.tick_ms.max(1));
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            loop {
                interval.tick().await;
                let svc = ticker.clone();
                if let Ok(Err(err)) = tokio::task::spawn_blocking(move || svc.tick()).await {
                    tracing::error!(%err, "tick failed");
                }
            }
        });
    }

    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    tracing::info!(addr = %args.listen, data_dir = %args.data_dir.display(), "listening");
    axum::serve(listener, http::router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
