//! Trusted client endpoint for the blindex proxy.
//!
//! The SDK never talks to the proxy directly. Every SQL string goes through
//! a caller-supplied [`Transport`], which in a real deployment is the
//! application backend. Two transports ship here: [`WireClient`] for the
//! newline-JSON TCP protocol and [`HttpClient`] for the proxy's HTTP front
//! end.
//!
//! Client-side cryptography is limited to ECDH P-256, HKDF-SHA256 and
//! AES-256-GCM plus verification of the attestation chain.

mod error;
mod http;
mod sdk;
mod wire;

pub use error::ClientError;
pub use http::HttpClient;
pub use sdk::{start_session, ClientSession, Handshake};
pub use wire::{QueryStart, WireClient};

pub use blindex_core::wire::{QueryOutcome, Row};

use async_trait::async_trait;

/// Carries one SQL string to the backend and returns its buffered result.
#[async_trait]
pub trait Transport: Send {
    async fn query(&mut self, sql: &str) -> Result<QueryOutcome, ClientError>;
}

#[async_trait]
impl<T: Transport + ?Sized> Transport for &mut T {
    async fn query(&mut self, sql: &str) -> Result<QueryOutcome, ClientError> {
        (**self).query(sql).await
    }
}

#[async_trait]
impl<T: Transport + ?Sized> Transport for Box<T> {
    async fn query(&mut self, sql: &str) -> Result<QueryOutcome, ClientError> {
        (**self).query(sql).await
    }
}
