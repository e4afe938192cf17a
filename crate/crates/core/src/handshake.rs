//! Payloads of the `KEY_EXCHANGE` procedure, base64 encoded in SQL.
//!
//! ```text
//! request  = client_random 32 | client_public 65
//! response = session_id 8 (BE) | server_random 32 | server_public 65 | report 276 | chain 675
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::attestation::{AttestationReport, CertChain, Transcript, CHAIN_LEN, REPORT_LEN};
use crate::crypto::PUBLIC_KEY_LEN;
use crate::error::{ErrorCode, ProxyError};

pub const CLIENT_HELLO_LEN: usize = 32 + PUBLIC_KEY_LEN;
pub const SERVER_HELLO_LEN: usize = 8 + 32 + PUBLIC_KEY_LEN + REPORT_LEN + CHAIN_LEN;

fn malformed(what: &str) -> ProxyError {
    ProxyError::new(ErrorCode::MalformedPayload, what)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    pub client_random: [u8; 32],
    pub client_public: [u8; PUBLIC_KEY_LEN],
}

impl ClientHello {
    pub fn encode(&self) -> String {
        let mut out = Vec::with_capacity(CLIENT_HELLO_LEN);
        out.extend_from_slice(&self.client_random);
        out.extend_from_slice(&self.client_public);
        STANDARD.encode(out)
    }

    pub fn decode(text: &str) -> Result<Self, ProxyError> {
        let bytes = STANDARD
            .decode(text)
            .map_err(|_| malformed("key exchange payload is not base64"))?;
        if bytes.len() != CLIENT_HELLO_LEN {
            return Err(malformed(&format!(
                "key exchange payload is {} bytes, expected {CLIENT_HELLO_LEN}",
                bytes.len()
            )));
        }
        Ok(Self {
            client_random: bytes[..32].try_into().expect("32"),
            client_public: bytes[32..].try_into().expect("65"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHello {
    pub session_id: u64,
    pub server_random: [u8; 32],
    pub server_public: [u8; PUBLIC_KEY_LEN],
    pub report: AttestationReport,
    pub chain: CertChain,
}

impl ServerHello {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SERVER_HELLO_LEN);
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.extend_from_slice(&self.server_random);
        out.extend_from_slice(&self.server_public);
        out.extend_from_slice(&self.report.to_bytes());
        out.extend_from_slice(&self.chain.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProxyError> {
        if bytes.len() != SERVER_HELLO_LEN {
            return Err(malformed(&format!(
                "key exchange response is {} bytes, expected {SERVER_HELLO_LEN}",
                bytes.len()
            )));
        }
        let (sid, rest) = bytes.split_at(8);
        let (server_random, rest) = rest.split_at(32);
        let (server_public, rest) = rest.split_at(PUBLIC_KEY_LEN);
        let (report, chain) = rest.split_at(REPORT_LEN);
        Ok(Self {
            session_id: u64::from_be_bytes(sid.try_into().expect("8")),
            server_random: server_random.try_into().expect("32"),
            server_public: server_public.try_into().expect("65"),
            report: AttestationReport::from_bytes(report)
                .map_err(|e| malformed(&e.to_string()))?,
            chain: CertChain::from_bytes(chain).map_err(|e| malformed(&e.to_string()))?,
        })
    }

    pub fn encode(&self) -> String {
        STANDARD.encode(self.to_bytes())
    }

    pub fn decode(text: &str) -> Result<Self, ProxyError> {
        let bytes = STANDARD
            .decode(text)
            .map_err(|_| malformed("key exchange response is not base64"))?;
        Self::from_bytes(&bytes)
    }

    /// The transcript as the client reconstructs it from its own hello.
    pub fn transcript(&self, hello: &ClientHello) -> Transcript {
        Transcript {
            client_random: hello.client_random,
            client_public: hello.client_public,
            server_random: self.server_random,
            server_public: self.server_public,
            session_id: self.session_id,
        }
    }
}
