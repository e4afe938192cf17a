//! Newline-JSON TCP front ends for the proxy and the reference database.

use std::net::SocketAddr;
use std::sync::Arc;

use async_trait::async_trait;
use blindex_core::wire::{decode_line, Request, Response};
use blindex_core::ProxyError;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use crate::backend::{relay, BackendConnection};
use crate::context::ProxyContext;
use crate::handler::ProxyHandler;
use crate::refdb::{LocalConnection, ReferenceDb};
use crate::sink::{LineSink, ResponseSink};

#[async_trait]
pub trait LineHandler: Send {
    async fn handle(&mut self, request: Request, sink: &mut dyn ResponseSink)
        -> Result<(), ProxyError>;
}

#[async_trait]
pub trait HandlerFactory: Send + Sync + 'static {
    async fn open(&self) -> Result<Box<dyn LineHandler>, ProxyError>;
}

#[async_trait]
impl LineHandler for ProxyHandler {
    async fn handle(
        &mut self,
        request: Request,
        sink: &mut dyn ResponseSink,
    ) -> Result<(), ProxyError> {
        ProxyHandler::handle(self, request, sink).await
    }
}

pub struct ProxyFactory(pub Arc<ProxyContext>);

#[async_trait]
impl HandlerFactory for ProxyFactory {
    async fn open(&self) -> Result<Box<dyn LineHandler>, ProxyError> {
        Ok(Box::new(ProxyHandler::open(self.0.clone()).await?))
    }
}

/// Relays requests straight into a reference-database connection.
pub struct RefDbHandler {
    conn: LocalConnection,
}

#[async_trait]
impl LineHandler for RefDbHandler {
    async fn handle(
        &mut self,
        request: Request,
        sink: &mut dyn ResponseSink,
    ) -> Result<(), ProxyError> {
        let done = Response::Done { affected: 0 };
        let result = match request {
            Request::Query { sql } => relay(&mut self.conn, &sql, sink).await,
            Request::Begin => match self.conn.begin().await {
                Ok(()) => sink.send(done).await,
                Err(e) => Err(e),
            },
            Request::Commit => match self.conn.commit().await {
                Ok(()) => sink.send(done).await,
                Err(e) => Err(e),
            },
            Request::Rollback => match self.conn.rollback().await {
                Ok(()) => sink.send(done).await,
                Err(e) => Err(e),
            },
        };
        match result {
            Ok(()) => Ok(()),
            Err(e) => {
                let _ = self.conn.discard().await;
                // a failing sink fails again here and closes the connection
                sink.send(Response::error(&e)).await
            }
        }
    }
}

pub struct RefDbFactory(pub ReferenceDb);

#[async_trait]
impl HandlerFactory for RefDbFactory {
    async fn open(&self) -> Result<Box<dyn LineHandler>, ProxyError> {
        Ok(Box::new(RefDbHandler {
            conn: self.0.connect(),
        }))
    }
}

async fn connection(stream: TcpStream, factory: Arc<dyn HandlerFactory>) {
    let peer = stream.peer_addr().ok();
    let _ = stream.set_nodelay(true);
    let (read, write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut sink = LineSink::new(write);
    let mut handler = match factory.open().await {
        Ok(h) => h,
        Err(e) => {
            tracing::warn!(?peer, error = %e, "cannot serve connection");
            let _ = sink.send(Response::error(&e)).await;
            return;
        }
    };
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line).await {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match decode_line(&line) {
            Ok(r) => r,
            Err(e) => {
                if sink.send(Response::error(&e)).await.is_err() {
                    break;
                }
                continue;
            }
        };
        if handler.handle(request, &mut sink).await.is_err() {
            break;
        }
    }
    tracing::debug!(?peer, "connection closed");
}

/// Accepts connections until the returned task is aborted. Each connection
/// runs in its own task, so a panic in one handler ends only that
/// connection.
pub fn spawn_line_server(listener: TcpListener, factory: Arc<dyn HandlerFactory>) -> JoinHandle<()> {
    tokio::spawn(async move {
        loop {
            match listener.accept().await {
                Ok((stream, _)) => {
                    tokio::spawn(connection(stream, factory.clone()));
                }
                Err(e) => {
                    tracing::warn!(error = %e, "accept failed");
                    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
                }
            }
        }
    })
}

/// Binds `addr` and serves the reference database on it.
pub async fn start_refdb(
    db: ReferenceDb,
    addr: &str,
) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, spawn_line_server(listener, Arc::new(RefDbFactory(db)))))
}
