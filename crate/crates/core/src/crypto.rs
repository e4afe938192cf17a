//! Cryptographic primitives and the key hierarchy.
//!
//! Two key families coexist:
//!
//! - session keys, derived per direction from an ephemeral P-256 ECDH
//!   exchange and used with AES-256-GCM under a counter nonce;
//! - long-term keys, a random per-user master key from which per-column
//!   encryption keys (ChaCha20-Poly1305, random nonce) and blind-index keys
//!   are derived with HKDF-SHA256.
//!
//! The client only ever needs the session half, which is restricted to
//! primitives available in browser WebCrypto (ECDH P-256, HKDF-SHA256,
//! AES-GCM).

use std::fmt;
use std::str::FromStr;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::Aes256Gcm;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chacha20poly1305::ChaCha20Poly1305;
use hkdf::Hkdf;
use p256::elliptic_curve::sec1::ToEncodedPoint;
use rand::rngs::OsRng;
use rand::RngCore;
use sha2::Sha256;
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const KEY_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 65;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const STORED_VERSION: u8 = 0x01;
/// version + nonce + tag
pub const STORED_OVERHEAD: usize = 1 + NONCE_LEN + TAG_LEN;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("system randomness unavailable")]
    Randomness,
    #[error("public key is not a valid P-256 point")]
    InvalidPublicKey,
    #[error("invalid private scalar")]
    InvalidSecretKey,
    #[error("requested {requested} bytes of HKDF output, maximum is {max}")]
    OutputTooLong { requested: usize, max: usize },
    #[error("session counter exhausted, the session must be re-established")]
    CounterExhausted,
    #[error("authentication failed")]
    Authentication,
    #[error("expected {expected} bytes, got {actual}")]
    InvalidLength { expected: usize, actual: usize },
    #[error("unsupported stored ciphertext version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("invalid argon2 parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T, E = CryptoError> = std::result::Result<T, E>;

/// Fills a fixed-size array from the OS CSPRNG.
pub fn random_bytes<const N: usize>() -> Result<[u8; N]> {
    let mut out = [0u8; N];
    OsRng
        .try_fill_bytes(&mut out)
        .map_err(|_| CryptoError::Randomness)?;
    Ok(out)
}

/// 32 bytes of secret key material. Zeroed on drop and never printed.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::InvalidLength {
            expected: KEY_LEN,
            actual: bytes.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn generate() -> Result<Self> {
        random_bytes().map(Self)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(<redacted>)")
    }
}

/// Ephemeral P-256 key pair with the public point in uncompressed SEC1 form.
pub struct KeyPair {
    secret: p256::SecretKey,
    public: [u8; PUBLIC_KEY_LEN],
}

impl KeyPair {
    pub fn from_secret_bytes(scalar: &[u8; 32]) -> Result<Self> {
        let secret =
            p256::SecretKey::from_slice(scalar).map_err(|_| CryptoError::InvalidSecretKey)?;
        let point = secret.public_key().to_encoded_point(false);
        let public: [u8; PUBLIC_KEY_LEN] = point
            .as_bytes()
            .try_into()
            .map_err(|_| CryptoError::InvalidPublicKey)?;
        Ok(Self { secret, public })
    }

    pub fn public(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.public
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &hex::encode(self.public))
            .finish_non_exhaustive()
    }
}

pub fn ecdh_keygen() -> Result<KeyPair> {
    // Rejection-sample a scalar in [1, n).
    loop {
        let mut scalar: [u8; 32] = random_bytes()?;
        let pair = KeyPair::from_secret_bytes(&scalar);
        scalar.zeroize();
        match pair {
            Ok(pair) => return Ok(pair),
            Err(CryptoError::InvalidSecretKey) => continue,
            Err(err) => return Err(err),
        }
    }
}

/// Big-endian x-coordinate of `secret * peer_public`.
pub fn ecdh_shared(secret: &KeyPair, peer_public: &[u8]) -> Result<[u8; 32]> {
    let peer =
        p256::PublicKey::from_sec1_bytes(peer_public).map_err(|_| CryptoError::InvalidPublicKey)?;
    let shared = p256::ecdh::diffie_hellman(secret.secret.to_nonzero_scalar(), peer.as_affine());
    let mut out = [0u8; 32];
    out.copy_from_slice(shared.raw_secret_bytes());
    Ok(out)
}

/// HKDF-SHA256 extract-and-expand. An empty salt is the RFC's "not provided".
pub fn hkdf(ikm: &[u8], salt: &[u8], info: &[u8], out_len: usize) -> Result<Vec<u8>> {
    const MAX: usize = 255 * 32;
    if out_len > MAX {
        return Err(CryptoError::OutputTooLong {
            requested: out_len,
            max: MAX,
        });
    }
    let salt = if salt.is_empty() { None } else { Some(salt) };
    let mut out = vec![0u8; out_len];
    Hkdf::<Sha256>::new(salt, ikm)
        .expand(info, &mut out)
        .map_err(|_| CryptoError::OutputTooLong {
            requested: out_len,
            max: MAX,
        })?;
    Ok(out)
}

fn hkdf_key(ikm: &[u8], salt: &[u8], info: &[u8]) -> SymmetricKey {
    let mut okm = hkdf(ikm, salt, info, KEY_LEN).expect("32 bytes is within the HKDF limit");
    let key = SymmetricKey::from_slice(&okm).expect("length checked");
    okm.zeroize();
    key
}

/// Returns `(client_to_proxy, proxy_to_client)`.
pub fn derive_session_keys(
    shared: &[u8],
    client_random: &[u8; 32],
    server_random: &[u8; 32],
) -> (SymmetricKey, SymmetricKey) {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(client_random);
    salt[32..].copy_from_slice(server_random);
    (
        hkdf_key(shared, &salt, b"bx1:c2p"),
        hkdf_key(shared, &salt, b"bx1:p2c"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ClientToProxy,
    ProxyToClient,
}

/// `0x00000000 || counter_be`.
pub fn session_nonce(counter: u64) -> [u8; NONCE_LEN] {
    let mut nonce = [0u8; NONCE_LEN];
    nonce[4..].copy_from_slice(&counter.to_be_bytes());
    nonce
}

/// Sending half of a session direction. Callers serialize access per
/// instance; the counter is the only mutable state.
#[derive(Debug)]
pub struct SessionCipherState {
    key: SymmetricKey,
    direction: Direction,
    counter: u64,
}

impl SessionCipherState {
    pub fn new(key: SymmetricKey, direction: Direction) -> Self {
        Self {
            key,
            direction,
            counter: 0,
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[cfg(test)]
    pub(crate) fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// AES-256-GCM with AD = session id (big-endian). Returns the nonce and
    /// ciphertext||tag.
    pub fn encrypt(
        &mut self,
        plaintext: &[u8],
        session_id: u64,
    ) -> Result<([u8; NONCE_LEN], Vec<u8>)> {
        if self.counter == u64::MAX {
            return Err(CryptoError::CounterExhausted);
        }
        let nonce = session_nonce(self.counter);
        let cipher = Aes256Gcm::new(self.key.as_bytes().into());
        let body = cipher
            .encrypt(
                (&nonce).into(),
                Payload {
                    msg: plaintext,
                    aad: &session_id.to_be_bytes(),
                },
            )
            .map_err(|_| CryptoError::Authentication)?;
        self.counter += 1;
        Ok((nonce, body))
    }
}

/// Repeated nonces are accepted: the backend may legitimately resubmit one
/// encrypted value in several statements.
pub fn session_decrypt(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    body: &[u8],
    session_id: u64,
) -> Result<Vec<u8>> {
    Aes256Gcm::new(key.as_bytes().into())
        .decrypt(
            nonce.into(),
            Payload {
                msg: body,
                aad: &session_id.to_be_bytes(),
            },
        )
        .map_err(|_| CryptoError::Authentication)
}

/// At-rest ciphertext: `0x01 || nonce(12) || ciphertext || tag(16)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredCiphertext {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
}

impl StoredCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + NONCE_LEN + self.body.len());
        out.push(STORED_VERSION);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < STORED_OVERHEAD {
            return Err(CryptoError::InvalidLength {
                expected: STORED_OVERHEAD,
                actual: bytes.len(),
            });
        }
        if bytes[0] != STORED_VERSION {
            return Err(CryptoError::UnsupportedVersion(bytes[0]));
        }
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&bytes[1..1 + NONCE_LEN]);
        Ok(Self {
            nonce,
            body: bytes[1 + NONCE_LEN..].to_vec(),
        })
    }

    /// Column cell form: standard base64 of [`Self::to_bytes`].
    pub fn to_text(&self) -> String {
        STANDARD.encode(self.to_bytes())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bytes = STANDARD.decode(text).map_err(|_| CryptoError::InvalidLength {
            expected: STORED_OVERHEAD,
            actual: 0,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn len(&self) -> usize {
        1 + NONCE_LEN + self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Associated data binding a stored value to its column.
pub fn column_ad(table: &str, column: &str) -> Vec<u8> {
    format!("{table}.{column}").into_bytes()
}

fn chacha_seal(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    plaintext: &[u8],
    ad: &[u8],
) -> Result<Vec<u8>> {
    ChaCha20Poly1305::new(key.as_bytes().into())
        .encrypt(nonce.into(), Payload { msg: plaintext, aad: ad })
        .map_err(|_| CryptoError::Authentication)
}

fn chacha_open(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    body: &[u8],
    ad: &[u8],
) -> Result<Vec<u8>> {
    ChaCha20Poly1305::new(key.as_bytes().into())
        .decrypt(nonce.into(), Payload { msg: body, aad: ad })
        .map_err(|_| CryptoError::Authentication)
}

pub fn value_encrypt(key: &SymmetricKey, plaintext: &[u8], ad: &[u8]) -> Result<StoredCiphertext> {
    let nonce: [u8; NONCE_LEN] = random_bytes()?;
    value_encrypt_with_nonce(key, nonce, plaintext, ad)
}

pub(crate) fn value_encrypt_with_nonce(
    key: &SymmetricKey,
    nonce: [u8; NONCE_LEN],
    plaintext: &[u8],
    ad: &[u8],
) -> Result<StoredCiphertext> {
    let body = chacha_seal(key, &nonce, plaintext, ad)?;
    Ok(StoredCiphertext { nonce, body })
}

/// Fails on tampering, wrong AD, or a row sealed under another user's key.
pub fn value_decrypt(key: &SymmetricKey, ct: &StoredCiphertext, ad: &[u8]) -> Result<Vec<u8>> {
    chacha_open(key, &ct.nonce, &ct.body, ad)
}

fn label(prefix: &str, table: &str, column: &str) -> Vec<u8> {
    let mut info = Vec::with_capacity(prefix.len() + table.len() + column.len() + 1);
    info.extend_from_slice(prefix.as_bytes());
    info.extend_from_slice(table.as_bytes());
    info.push(0);
    info.extend_from_slice(column.as_bytes());
    info
}

pub fn derive_column_key(ltk: &SymmetricKey, table: &str, column: &str) -> SymmetricKey {
    hkdf_key(ltk.as_bytes(), &[], &label("col:", table, column))
}

pub fn derive_bidx_key(ltk: &SymmetricKey, table: &str, column: &str) -> SymmetricKey {
    hkdf_key(ltk.as_bytes(), &[], &label("bidx:", table, column))
}

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArgonParams {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl ArgonParams {
    pub const MIN_MEMORY_KIB: u32 = 8192;

    /// Cheapest parameters accepted; for tests and benchmarks.
    pub const MINIMAL: ArgonParams = ArgonParams {
        memory_kib: Self::MIN_MEMORY_KIB,
        iterations: 1,
        parallelism: 1,
    };

    pub fn validate(&self) -> Result<()> {
        if self.memory_kib < Self::MIN_MEMORY_KIB {
            return Err(CryptoError::InvalidParams(format!(
                "memory must be at least {} KiB",
                Self::MIN_MEMORY_KIB
            )));
        }
        if self.iterations == 0 {
            return Err(CryptoError::InvalidParams("iterations must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(CryptoError::InvalidParams("parallelism must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for ArgonParams {
    fn default() -> Self {
        Self {
            memory_kib: 64 * 1024,
            iterations: 3,
            parallelism: 1,
        }
    }
}

impl fmt::Display for ArgonParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m={},t={},p={}",
            self.memory_kib, self.iterations, self.parallelism
        )
    }
}

impl FromStr for ArgonParams {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self> {
        let mut params = ArgonParams {
            memory_kib: 0,
            iterations: 0,
            parallelism: 0,
        };
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| CryptoError::InvalidParams(format!("bad component {part:?}")))?;
            let v: u32 = v
                .trim()
                .parse()
                .map_err(|_| CryptoError::InvalidParams(format!("bad number {v:?}")))?;
            match k.trim() {
                "m" => params.memory_kib = v,
                "t" => params.iterations = v,
                "p" => params.parallelism = v,
                other => {
                    return Err(CryptoError::InvalidParams(format!("unknown key {other:?}")))
                }
            }
        }
        params.validate()?;
        Ok(params)
    }
}

pub fn kdf_password(password: &[u8], salt: &[u8; 16], params: ArgonParams) -> Result<SymmetricKey> {
    params.validate()?;
    let argon_params = argon2::Params::new(
        params.memory_kib,
        params.iterations,
        params.parallelism,
        Some(KEY_LEN),
    )
    .map_err(|e| CryptoError::InvalidParams(e.to_string()))?;
    let argon = argon2::Argon2::new(
        argon2::Algorithm::Argon2id,
        argon2::Version::V0x13,
        argon_params,
    );
    let mut out = [0u8; KEY_LEN];
    argon
        .hash_password_into(password, salt, &mut out)
        .map_err(|e| CryptoError::InvalidParams(e.to_string()))?;
    let key = SymmetricKey::from_bytes(out);
    out.zeroize();
    Ok(key)
}

/// Seals a long-term key under a password-derived key. Returns
/// `(nonce, ciphertext||tag)`; the wrapped key is 48 bytes.
pub fn wrap_key(
    kek: &SymmetricKey,
    key: &SymmetricKey,
    ad: &[u8],
) -> Result<([u8; NONCE_LEN], Vec<u8>)> {
    let nonce: [u8; NONCE_LEN] = random_bytes()?;
    let body = chacha_seal(kek, &nonce, key.as_bytes(), ad)?;
    Ok((nonce, body))
}

pub fn unwrap_key(
    kek: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    wrapped: &[u8],
    ad: &[u8],
) -> Result<SymmetricKey> {
    let mut raw = chacha_open(kek, nonce, wrapped, ad)?;
    let key = SymmetricKey::from_slice(&raw);
    raw.zeroize();
    key
}
