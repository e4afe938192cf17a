use async_trait::async_trait;
use blindex_core::wire::{decode_line, encode_line, QueryOutcome, Request, Response, Row};
use blindex_core::ProxyError;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpStream, ToSocketAddrs};

use crate::{ClientError, Transport};

/// First answer to a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryStart {
    /// A result set follows; pull it with [`WireClient::next_row`].
    Rows(Vec<String>),
    Done(u64),
}

/// Streaming client for the newline-JSON protocol. Used both against the
/// proxy and, by the proxy itself, against the reference backend.
pub struct WireClient {
    reader: BufReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
    line: String,
    in_result: bool,
    last_affected: u64,
}

impl WireClient {
    pub async fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        Ok(Self::from_stream(stream))
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        let _ = stream.set_nodelay(true);
        let (r, w) = stream.into_split();
        Self {
            reader: BufReader::new(r),
            writer: w,
            line: String::new(),
            in_result: false,
            last_affected: 0,
        }
    }

    pub async fn send(&mut self, request: &Request) -> Result<(), ClientError> {
        self.writer
            .write_all(encode_line(request).as_bytes())
            .await?;
        Ok(())
    }

    pub async fn recv(&mut self) -> Result<Response, ClientError> {
        self.line.clear();
        let n = self.reader.read_line(&mut self.line).await?;
        if n == 0 {
            return Err(ClientError::Closed);
        }
        decode_line(&self.line).map_err(|e: ProxyError| ClientError::Protocol(e.message))
    }

    /// Sends a query and reads up to the first message of its answer.
    pub async fn start_query(&mut self, sql: &str) -> Result<QueryStart, ClientError> {
        if self.in_result {
            self.drain().await?;
        }
        self.send(&Request::Query { sql: sql.to_owned() }).await?;
        match self.recv().await? {
            Response::Columns { names } => {
                self.in_result = true;
                Ok(QueryStart::Rows(names))
            }
            Response::Done { affected } => {
                self.last_affected = affected;
                Ok(QueryStart::Done(affected))
            }
            Response::Error { code, message } => Err(server_error(&code, message)),
            Response::Row { .. } => Err(ClientError::Protocol("row before columns".into())),
        }
    }

    /// Next row of the current result set, `None` once `done` arrives.
    pub async fn next_row(&mut self) -> Result<Option<Row>, ClientError> {
        if !self.in_result {
            return Ok(None);
        }
        match self.recv().await {
            Ok(Response::Row { values }) => Ok(Some(values)),
            Ok(Response::Done { affected }) => {
                self.in_result = false;
                self.last_affected = affected;
                Ok(None)
            }
            Ok(Response::Error { code, message }) => {
                self.in_result = false;
                Err(server_error(&code, message))
            }
            Ok(Response::Columns { .. }) => {
                self.in_result = false;
                Err(ClientError::Protocol("unexpected columns".into()))
            }
            Err(e) => {
                self.in_result = false;
                Err(e)
            }
        }
    }

    /// Affected count from the most recent `done`.
    pub fn last_affected(&self) -> u64 {
        self.last_affected
    }

    pub fn in_result(&self) -> bool {
        self.in_result
    }

    /// Discards the rest of an unfinished result set.
    pub async fn drain(&mut self) -> Result<(), ClientError> {
        while self.next_row().await?.is_some() {}
        Ok(())
    }

    pub async fn query(&mut self, sql: &str) -> Result<QueryOutcome, ClientError> {
        match self.start_query(sql).await? {
            QueryStart::Done(affected) => Ok(QueryOutcome {
                affected,
                ..Default::default()
            }),
            QueryStart::Rows(columns) => {
                let mut rows = Vec::new();
                while let Some(row) = self.next_row().await? {
                    rows.push(row);
                }
                Ok(QueryOutcome {
                    columns,
                    rows,
                    affected: self.last_affected,
                })
            }
        }
    }

    async fn control(&mut self, request: Request) -> Result<(), ClientError> {
        if self.in_result {
            self.drain().await?;
        }
        self.send(&request).await?;
        match self.recv().await? {
            Response::Done { .. } => Ok(()),
            Response::Error { code, message } => Err(server_error(&code, message)),
            other => Err(ClientError::Protocol(format!("unexpected {other:?}"))),
        }
    }

    pub async fn begin(&mut self) -> Result<(), ClientError> {
        self.control(Request::Begin).await
    }

    pub async fn commit(&mut self) -> Result<(), ClientError> {
        self.control(Request::Commit).await
    }

    pub async fn rollback(&mut self) -> Result<(), ClientError> {
        self.control(Request::Rollback).await
    }
}

fn server_error(code: &str, message: String) -> ClientError {
    let code = blindex_core::ErrorCode::parse(code).unwrap_or(blindex_core::ErrorCode::Internal);
    ClientError::Server(ProxyError::new(code, message))
}

#[async_trait]
impl Transport for WireClient {
    async fn query(&mut self, sql: &str) -> Result<QueryOutcome, ClientError> {
        WireClient::query(self, sql).await
    }
}
