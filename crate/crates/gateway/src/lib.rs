//! HTTP + server-sent-events gateway around a live simulation.
//!
//! One task owns the [`Engine`] and paces it against the wall clock. Handlers
//! talk to it through a bounded queue; the event stream reads the shared
//! record history by offset, so a client that reconnects with its last seen
//! `id` misses nothing.

mod api;
mod error;
mod owner;
pub mod sink;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;

use axum::Router;
use monitomation_core::log::ReadLogError;
use monitomation_core::{Engine, Scenario};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use sink::{FsyncPolicy, LogSink};

pub const DEFAULT_PORT: u16 = 8080;
const QUEUE_DEPTH: usize = 256;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub scenario: Scenario,
    /// Simulated µs per wall µs.
    pub speed: f64,
    /// JSON-lines log; `None` keeps records in memory only.
    pub log: Option<PathBuf>,
    pub fsync: FsyncPolicy,
    pub start_paused: bool,
    /// Stop at the scenario duration instead of running open-ended.
    pub bounded: bool,
    /// Static files served under `/`.
    pub console_dir: Option<PathBuf>,
}

impl GatewayConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            speed: 1.0,
            log: None,
            fsync: FsyncPolicy::Never,
            start_paused: false,
            bounded: false,
            console_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("InvalidConfig: speed must be a positive finite number, got {0}")]
    InvalidSpeed(f64),
    #[error("{0}")]
    Log(#[from] ReadLogError),
    #[error("IoError: {0}")]
    Io(#[from] io::Error),
}

/// A running gateway.
pub struct Gateway {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    server: JoinHandle<io::Result<()>>,
    owner: JoinHandle<()>,
}

impl Gateway {
    /// Starts serving on an already bound listener.
    pub async fn start(config: GatewayConfig, listener: TcpListener) -> Result<Self, GatewayError> {
        if !(config.speed.is_finite() && config.speed > 0.0) {
            return Err(GatewayError::InvalidSpeed(config.speed));
        }
        let (sink, history) = match &config.log {
            Some(path) => LogSink::open(path, config.fsync)?,
            None => (LogSink::memory(), Vec::new()),
        };
        let mut engine = Engine::new(config.scenario);
        if !config.bounded {
            engine.set_unbounded();
        }
        let (owner, shared) = owner::Owner::new(engine, sink, history, config.speed, config.start_paused);
        let (tx, rx) = mpsc::channel(QUEUE_DEPTH);
        let (shutdown, shutdown_rx) = watch::channel(false);
        let owner = tokio::spawn(owner.run(rx, shutdown_rx.clone()));

        let mut app = Router::new()
            .nest("/api/v1", api::routes())
            .with_state(api::AppState { tx, shared })
            .layer(CorsLayer::permissive());
        if let Some(dir) = &config.console_dir {
            app = app.fallback_service(ServeDir::new(dir));
        }
        let addr = listener.local_addr()?;
        let mut stop = shutdown_rx;
        let server = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = stop.wait_for(|s| *s).await;
                })
                .await
        });
        tracing::info!("gateway listening on {addr}");
        Ok(Self {
            addr,
            shutdown,
            server,
            owner,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting requests, ends open event streams and waits for both tasks.
    pub async fn shutdown(self) -> io::Result<()> {
        let _ = self.shutdown.send(true);
        let _ = self.owner.await;
        self.server.await.map_err(io::Error::other)?
    }

    /// Serves until the server task ends on its own.
    pub async fn wait(self) -> io::Result<()> {
        self.server.await.map_err(io::Error::other)?
    }
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(config: GatewayConfig, addr: SocketAddr) -> Result<(), GatewayError> {
    let listener = TcpListener::bind(addr).await?;
    let gw = Gateway::start(config, listener).await?;
    let _ = tokio::signal::ctrl_c().await;
    gw.shutdown().await?;
    Ok(())
}
