//! `moje serve`: the moderation HTTP API over a resident model. Drains
//! in-flight requests on SIGTERM / ctrl-c.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Args;

use moje_service::{AppState, ServeOptions, DEFAULT_MAX_PROMPT_BYTES};

use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model bundle to serve.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Bind address.
    #[arg(long, default_value = "127.0.0.1:8600")]
    pub bind: SocketAddr,
    /// Tokio worker threads (default: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Reject prompts larger than this many bytes with 413.
    #[arg(long, default_value_t = DEFAULT_MAX_PROMPT_BYTES)]
    pub max_prompt_bytes: usize,
}

pub fn run(args: ServeArgs) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();

    let state = AppState::from_bundle_path(
        &args.bundle,
        ServeOptions {
            max_prompt_bytes: args.max_prompt_bytes,
        },
    )
    .map_err(CliError::usage)?;

    let mut builder = tokio::runtime::Builder::new_multi_thread();
    if let Some(workers) = args.workers {
        builder.worker_threads(workers.max(1));
    }
    let runtime = builder
        .enable_all()
        .build()
        .map_err(CliError::runtime)?;

    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.bind)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {}: {e}", args.bind)))?;
        eprintln!(
            "serving {} on http://{} (version {})",
            args.bundle.display(),
            args.bind,
            state.current().version
        );
        moje_service::serve(listener, state, shutdown_signal())
            .await
            .map_err(CliError::runtime)
    })
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("installing SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = ctrl_c.await;
    }
}
