use async_trait::async_trait;
use blindex_core::pipeline::StatsSnapshot;
use blindex_core::wire::{ErrorBody, QueryOutcome, QueryRequest};

use crate::{ClientError, Transport};

/// Transport over the proxy's HTTP front end (`POST /query`).
#[derive(Clone)]
pub struct HttpClient {
    base: String,
    http: reqwest::Client,
}

impl HttpClient {
    /// `addr` is `host:port` or a full `http://` URL.
    pub fn new(addr: &str) -> Self {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_owned()
        } else {
            format!("http://{addr}")
        };
        Self {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub async fn health(&self) -> Result<bool, ClientError> {
        let resp = self.http.get(format!("{}/healthz", self.base)).send().await?;
        Ok(resp.status().is_success())
    }

    pub async fn stats(&self) -> Result<StatsSnapshot, ClientError> {
        let resp = self.http.get(format!("{}/stats", self.base)).send().await?;
        Ok(resp.error_for_status()?.json().await?)
    }

    pub async fn query(&self, sql: &str) -> Result<QueryOutcome, ClientError> {
        let resp = self
            .http
            .post(format!("{}/query", self.base))
            .json(&QueryRequest { sql: sql.to_owned() })
            .send()
            .await?;
        if resp.status().is_success() {
            Ok(resp.json().await?)
        } else {
            let status = resp.status();
            let body = resp.text().await?;
            match serde_json::from_str::<ErrorBody>(&body) {
                Ok(err) => Err(ClientError::Server(err.into_error())),
                Err(_) => Err(ClientError::Protocol(format!("HTTP {status}: {body}"))),
            }
        }
    }
}

#[async_trait]
impl Transport for HttpClient {
    async fn query(&mut self, sql: &str) -> Result<QueryOutcome, ClientError> {
        HttpClient::query(self, sql).await
    }
}
