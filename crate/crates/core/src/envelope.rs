//! Session-layer encrypted values exchanged between client and proxy.
//!
//! Layout, base64 (standard alphabet, padded) when embedded in SQL or JSON:
//!
//! ```text
//! "BX" | 0x01 | session_id (u64 BE) | nonce (12) | ciphertext || tag (16)
//! ```
//!
//! The session id sits in clear so the proxy can find the session a value
//! belongs to before decrypting anything.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::crypto::{
    session_decrypt, CryptoError, SessionCipherState, SymmetricKey, NONCE_LEN, TAG_LEN,
};

pub const MAGIC: &[u8; 2] = b"BX";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 2 + 1 + 8 + NONCE_LEN;
/// Bytes added to a plaintext by enveloping, before base64.
pub const OVERHEAD: usize = HEADER_LEN + TAG_LEN;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("envelope is not valid base64")]
    Base64,
    #[error("envelope too short ({0} bytes)")]
    TooShort(usize),
    #[error("envelope magic or version mismatch")]
    BadHeader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub session_id: u64,
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
}

impl Envelope {
    /// Encrypts under the sending state of a session.
    pub fn seal(
        state: &mut SessionCipherState,
        session_id: u64,
        plaintext: &[u8],
    ) -> Result<Self, CryptoError> {
        let (nonce, body) = state.encrypt(plaintext, session_id)?;
        Ok(Self {
            session_id,
            nonce,
            body,
        })
    }

    pub fn open(&self, key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
        session_decrypt(key, &self.nonce, &self.body, self.session_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.body.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        if bytes.len() < OVERHEAD {
            return Err(EnvelopeError::TooShort(bytes.len()));
        }
        if &bytes[..2] != MAGIC || bytes[2] != VERSION {
            return Err(EnvelopeError::BadHeader);
        }
        let session_id = u64::from_be_bytes(bytes[3..11].try_into().expect("8 bytes"));
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&bytes[11..HEADER_LEN]);
        Ok(Self {
            session_id,
            nonce,
            body: bytes[HEADER_LEN..].to_vec(),
        })
    }

    pub fn encode(&self) -> String {
        STANDARD.encode(self.to_bytes())
    }

    pub fn decode(text: &str) -> Result<Self, EnvelopeError> {
        let bytes = STANDARD.decode(text).map_err(|_| EnvelopeError::Base64)?;
        Self::from_bytes(&bytes)
    }

    /// Cheap check used by the SQL classifier on every string literal.
    pub fn looks_like(text: &str) -> bool {
        // "BX\x01" encodes to "QlgB"
        text.starts_with("QlgB") && Self::decode(text).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_session_keys, Direction};

    #[test]
    fn length_is_plaintext_plus_39() {
        let (c2p, _) = derive_session_keys(&[1; 32], &[2; 32], &[3; 32]);
        let mut state = SessionCipherState::new(c2p.clone(), Direction::ClientToProxy);
        for len in [0usize, 1, 11, 100] {
            let env = Envelope::seal(&mut state, 9, &vec![b'a'; len]).unwrap();
            assert_eq!(env.to_bytes().len(), len + 39);
            let decoded = Envelope::decode(&env.encode()).unwrap();
            assert_eq!(decoded.session_id, 9);
            assert_eq!(decoded.open(&c2p).unwrap(), vec![b'a'; len]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(Envelope::decode("!!!"), Err(EnvelopeError::Base64));
        assert_eq!(
            Envelope::decode(&STANDARD.encode([0u8; 10])),
            Err(EnvelopeError::TooShort(10))
        );
        let mut bytes = vec![b'B', b'Y', 1];
        bytes.extend_from_slice(&[0; 40]);
        assert_eq!(Envelope::from_bytes(&bytes), Err(EnvelopeError::BadHeader));
        assert!(!Envelope::looks_like("hello"));
        assert!(!Envelope::looks_like("123-45-6789"));
    }
}
