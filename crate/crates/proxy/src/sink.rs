use async_trait::async_trait;
use blindex_core::wire::{encode_line, QueryOutcome, Response};
use blindex_core::{ErrorCode, ProxyError};
use tokio::io::{AsyncWrite, AsyncWriteExt, BufWriter};

/// Destination for response messages of one request.
#[async_trait]
pub trait ResponseSink: Send {
    async fn send(&mut self, msg: Response) -> Result<(), ProxyError>;
}

fn io_error(err: std::io::Error) -> ProxyError {
    ProxyError::new(ErrorCode::ProtocolError, format!("client write failed: {err}"))
}

/// Writes protocol lines, flushing at the end of each answer.
pub struct LineSink<W> {
    writer: BufWriter<W>,
}

impl<W: AsyncWrite + Unpin + Send> LineSink<W> {
    pub fn new(writer: W) -> Self {
        Self {
            writer: BufWriter::new(writer),
        }
    }

    pub async fn flush(&mut self) -> Result<(), ProxyError> {
        self.writer.flush().await.map_err(io_error)
    }
}

#[async_trait]
impl<W: AsyncWrite + Unpin + Send> ResponseSink for LineSink<W> {
    async fn send(&mut self, msg: Response) -> Result<(), ProxyError> {
        let end = matches!(msg, Response::Done { .. } | Response::Error { .. });
        self.writer
            .write_all(encode_line(&msg).as_bytes())
            .await
            .map_err(io_error)?;
        if end {
            self.flush().await?;
        }
        Ok(())
    }
}

/// Buffers one answer for the HTTP front end.
#[derive(Debug, Default)]
pub struct CollectSink {
    pub outcome: QueryOutcome,
    pub error: Option<ProxyError>,
}

#[async_trait]
impl ResponseSink for CollectSink {
    async fn send(&mut self, msg: Response) -> Result<(), ProxyError> {
        match msg {
            Response::Columns { names } => self.outcome.columns = names,
            Response::Row { values } => self.outcome.rows.push(values),
            Response::Done { affected } => self.outcome.affected = affected,
            Response::Error { code, message } => {
                let code = ErrorCode::parse(&code).unwrap_or(ErrorCode::Internal);
                self.error = Some(ProxyError::new(code, message));
            }
        }
        Ok(())
    }
}

impl CollectSink {
    pub fn into_result(self) -> Result<QueryOutcome, ProxyError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.outcome),
        }
    }
}
