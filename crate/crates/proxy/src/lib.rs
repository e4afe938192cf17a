//! The blindex proxy: sits between an application backend and its database,
//! re-encrypts selected columns under per-user keys and rewrites queries to
//! filter on blind indices.
//!
//! Front ends: the newline-JSON TCP protocol ([`server`]), an HTTP/JSON
//! endpoint ([`http`]) and a MySQL protocol subset ([`mysql`]). The database
//! is reached through a [`backend::BackendConnector`]; [`refdb`] provides an
//! in-memory reference implementation.

pub mod backend;
pub mod context;
pub mod handler;
pub mod http;
pub mod mysql;
pub mod procedures;
pub mod refdb;
pub mod server;
pub mod session;
pub mod sink;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use context::{default_measurement, Attester, ProxyContext, SIMULATED_MEASUREMENT_LABEL};
pub use refdb::ReferenceDb;

/// A proxy bound to its listeners.
pub struct RunningProxy {
    pub addr: SocketAddr,
    pub http_addr: Option<SocketAddr>,
    pub ctx: Arc<ProxyContext>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningProxy {
    /// Waits until every listener stops, which only happens on abort.
    pub async fn wait(mut self) {
        for t in std::mem::take(&mut self.tasks) {
            let _ = t.await;
        }
    }

    pub fn shutdown(&self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

impl Drop for RunningProxy {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Starts the TCP front end on `listen`, plus HTTP when `http` is given, and
/// a task purging expired sessions.
pub async fn start_proxy(
    ctx: Arc<ProxyContext>,
    listen: &str,
    http: Option<&str>,
) -> std::io::Result<RunningProxy> {
    let listener = TcpListener::bind(listen).await?;
    let addr = listener.local_addr()?;
    let mut tasks = vec![server::spawn_line_server(
        listener,
        Arc::new(server::ProxyFactory(ctx.clone())),
    )];
    let mut http_addr = None;
    if let Some(http) = http {
        let listener = TcpListener::bind(http).await?;
        http_addr = Some(listener.local_addr()?);
        let app = http::router(ctx.clone());
        tasks.push(tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!(error = %e, "http server stopped");
            }
        }));
    }
    let purge_ctx = ctx.clone();
    let period = (ctx.sessions.ttl() / 4).clamp(Duration::from_millis(100), Duration::from_secs(60));
    tasks.push(tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let purged = purge_ctx.sessions.purge_expired(Instant::now());
            if purged > 0 {
                tracing::debug!(purged, "expired sessions removed");
            }
        }
    }));
    Ok(RunningProxy {
        addr,
        http_addr,
        ctx,
        tasks,
    })
}
