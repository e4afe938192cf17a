use std::fmt;

use serde::{Deserialize, Serialize};

/// Stable error codes surfaced to callers in `error` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    SyntaxError,
    UnsupportedStatement,
    UnsupportedPredicate,
    CleartextFilterOnEncrypted,
    CleartextValueOnEncrypted,
    EnvelopeOnCleartext,
    AggregationOverEncrypted,
    SessionUnresolvable,
    SessionConflict,
    SessionNotFound,
    SessionExpired,
    NotLoggedIn,
    DecryptionFailed,
    LoginFailed,
    DuplicateUser,
    MissingKeyColumn,
    MalformedPayload,
    AttestationFailed,
    CounterExhausted,
    BackendError,
    ProtocolError,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::SyntaxError => "syntax_error",
            ErrorCode::UnsupportedStatement => "unsupported_statement",
            ErrorCode::UnsupportedPredicate => "unsupported_predicate",
            ErrorCode::CleartextFilterOnEncrypted => "cleartext_filter_on_encrypted",
            ErrorCode::CleartextValueOnEncrypted => "cleartext_value_on_encrypted",
            ErrorCode::EnvelopeOnCleartext => "envelope_on_cleartext",
            ErrorCode::AggregationOverEncrypted => "aggregation_over_encrypted",
            ErrorCode::SessionUnresolvable => "session_unresolvable",
            ErrorCode::SessionConflict => "session_conflict",
            ErrorCode::SessionNotFound => "session_not_found",
            ErrorCode::SessionExpired => "session_expired",
            ErrorCode::NotLoggedIn => "not_logged_in",
            ErrorCode::DecryptionFailed => "decryption_failed",
            ErrorCode::LoginFailed => "login_failed",
            ErrorCode::DuplicateUser => "duplicate_user",
            ErrorCode::MissingKeyColumn => "missing_key_column",
            ErrorCode::MalformedPayload => "malformed_payload",
            ErrorCode::AttestationFailed => "attestation_failed",
            ErrorCode::CounterExhausted => "counter_exhausted",
            ErrorCode::BackendError => "backend_error",
            ErrorCode::ProtocolError => "protocol_error",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(code.to_owned())).ok()
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A statement-level failure. The message never carries key material or
/// decrypted plaintext.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ProxyError {
    pub code: ErrorCode,
    pub message: String,
}

impl ProxyError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<crate::crypto::CryptoError> for ProxyError {
    fn from(err: crate::crypto::CryptoError) -> Self {
        use crate::crypto::CryptoError;
        let code = match err {
            CryptoError::CounterExhausted => ErrorCode::CounterExhausted,
            CryptoError::InvalidPublicKey | CryptoError::InvalidLength { .. } => {
                ErrorCode::MalformedPayload
            }
            CryptoError::Authentication => ErrorCode::DecryptionFailed,
            _ => ErrorCode::Internal,
        };
        ProxyError::new(code, err.to_string())
    }
}

impl From<crate::envelope::EnvelopeError> for ProxyError {
    fn from(err: crate::envelope::EnvelopeError) -> Self {
        ProxyError::new(ErrorCode::MalformedPayload, err.to_string())
    }
}
