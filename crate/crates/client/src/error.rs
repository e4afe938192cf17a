use blindex_core::attestation::RejectReason;
use blindex_core::crypto::CryptoError;
use blindex_core::ProxyError;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    /// The proxy or backend answered with an `error` message.
    #[error("{0}")]
    Server(ProxyError),
    #[error("connection closed")]
    Closed,
    #[error("attestation rejected: {0}")]
    Attestation(RejectReason),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("session is not verified")]
    Unverified,
    #[error("envelope belongs to session {got}, expected {expected}")]
    WrongSession { expected: u64, got: u64 },
    #[error("procedure {0} did not return OK")]
    ProcedureFailed(&'static str),
}

impl ClientError {
    /// Error code reported by the server, if this is a server error.
    pub fn code(&self) -> Option<blindex_core::ErrorCode> {
        match self {
            ClientError::Server(e) => Some(e.code),
            _ => None,
        }
    }
}
