//! Pluggable database connections. The proxy owns one connection per client
//! connection and pulls result rows from it one at a time.

use std::sync::Arc;

use async_trait::async_trait;
use blindex_client::{ClientError, QueryStart, WireClient};
use blindex_core::wire::{Response, Row};
use blindex_core::{ErrorCode, ProxyError};

use crate::sink::ResponseSink;

/// First answer to `execute`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exec {
    Rows(Vec<String>),
    Done(u64),
}

#[async_trait]
pub trait BackendConnection: Send {
    async fn execute(&mut self, sql: &str) -> Result<Exec, ProxyError>;
    /// Next row of the open result set, `None` once it is exhausted.
    async fn next_row(&mut self) -> Result<Option<Row>, ProxyError>;
    /// Affected count reported when the last result finished.
    fn last_affected(&self) -> u64;
    async fn begin(&mut self) -> Result<(), ProxyError>;
    async fn commit(&mut self) -> Result<(), ProxyError>;
    async fn rollback(&mut self) -> Result<(), ProxyError>;

    async fn drain(&mut self) -> Result<(), ProxyError> {
        while self.next_row().await?.is_some() {}
        Ok(())
    }

    /// Abandons the open result set. Stream protocols have no cancel, so
    /// the default reads it to the end.
    async fn discard(&mut self) -> Result<(), ProxyError> {
        self.drain().await
    }

    /// Runs a statement and buffers its result.
    async fn query_all(&mut self, sql: &str) -> Result<(Vec<String>, Vec<Row>), ProxyError> {
        match self.execute(sql).await? {
            Exec::Done(_) => Ok((Vec::new(), Vec::new())),
            Exec::Rows(columns) => {
                let mut rows = Vec::new();
                while let Some(row) = self.next_row().await? {
                    rows.push(row);
                }
                Ok((columns, rows))
            }
        }
    }
}

#[async_trait]
pub trait BackendConnector: Send + Sync {
    async fn connect(&self) -> Result<Box<dyn BackendConnection>, ProxyError>;
}

/// Streams a statement's result to `sink` unchanged.
pub async fn relay(
    conn: &mut dyn BackendConnection,
    sql: &str,
    sink: &mut dyn ResponseSink,
) -> Result<(), ProxyError> {
    match conn.execute(sql).await? {
        Exec::Done(affected) => sink.send(Response::Done { affected }).await,
        Exec::Rows(names) => {
            sink.send(Response::Columns { names }).await?;
            while let Some(values) = conn.next_row().await? {
                sink.send(Response::Row { values }).await?;
            }
            let affected = conn.last_affected();
            sink.send(Response::Done { affected }).await
        }
    }
}

/// Connections over the newline-JSON protocol, e.g. to `blindex-refdb`.
pub struct WireConnector {
    addr: String,
}

impl WireConnector {
    pub fn new(addr: impl Into<String>) -> Arc<Self> {
        Arc::new(Self { addr: addr.into() })
    }
}

fn backend_error(err: ClientError) -> ProxyError {
    match err {
        // keep the backend's own classification
        ClientError::Server(e) => e,
        other => ProxyError::new(ErrorCode::BackendError, other.to_string()),
    }
}

#[async_trait]
impl BackendConnector for WireConnector {
    async fn connect(&self) -> Result<Box<dyn BackendConnection>, ProxyError> {
        let client = WireClient::connect(&self.addr).await.map_err(|e| {
            ProxyError::new(
                ErrorCode::BackendError,
                format!("backend {} unreachable: {e}", self.addr),
            )
        })?;
        Ok(Box::new(WireConnection { client }))
    }
}

pub struct WireConnection {
    client: WireClient,
}

#[async_trait]
impl BackendConnection for WireConnection {
    async fn execute(&mut self, sql: &str) -> Result<Exec, ProxyError> {
        match self.client.start_query(sql).await.map_err(backend_error)? {
            QueryStart::Rows(cols) => Ok(Exec::Rows(cols)),
            QueryStart::Done(n) => Ok(Exec::Done(n)),
        }
    }

    async fn next_row(&mut self) -> Result<Option<Row>, ProxyError> {
        self.client.next_row().await.map_err(backend_error)
    }

    fn last_affected(&self) -> u64 {
        self.client.last_affected()
    }

    async fn begin(&mut self) -> Result<(), ProxyError> {
        self.client.begin().await.map_err(backend_error)
    }

    async fn commit(&mut self) -> Result<(), ProxyError> {
        self.client.commit().await.map_err(backend_error)
    }

    async fn rollback(&mut self) -> Result<(), ProxyError> {
        self.client.rollback().await.map_err(backend_error)
    }
}
