//! KEY_EXCHANGE, REGISTER and LOGIN.
//!
//! User records live in `_blindex_users` on the backend, binary fields as
//! lowercase hex. The long-term key is wrapped with ChaCha20-Poly1305 under
//! an Argon2id key derived from the password, with `bx-user:<username>` as
//! associated data.

use blindex_core::attestation::{issue_report, Transcript};
use blindex_core::crypto::{
    derive_session_keys, ecdh_keygen, ecdh_shared, kdf_password, random_bytes, unwrap_key,
    wrap_key, ArgonParams, SymmetricKey, NONCE_LEN,
};
use blindex_core::envelope::Envelope;
use blindex_core::handshake::{ClientHello, ServerHello};
use blindex_core::sql::{render_literal, Literal};
use blindex_core::{ErrorCode, ProxyError};
use zeroize::Zeroizing;

use crate::backend::BackendConnection;
use crate::context::ProxyContext;

pub const USERS_TABLE: &str = "_blindex_users";
const MAX_USERNAME: usize = 255;

const CREATE_USERS: &str = "CREATE TABLE IF NOT EXISTS _blindex_users (username VARCHAR(255) PRIMARY KEY, salt VARCHAR(32), params VARCHAR(64), nonce VARCHAR(24), wrapped_key VARCHAR(96))";

pub fn user_ad(username: &str) -> Vec<u8> {
    [b"bx-user:".as_slice(), username.as_bytes()].concat()
}

/// Handles `KEY_EXCHANGE`. Nothing is stored unless every step succeeds.
pub fn key_exchange(ctx: &ProxyContext, payload: &str) -> Result<String, ProxyError> {
    let hello = ClientHello::decode(payload)?;
    let keypair = ecdh_keygen()?;
    let shared = Zeroizing::new(ecdh_shared(&keypair, &hello.client_public)?);
    let server_random: [u8; 32] = random_bytes()?;
    loop {
        let session_id = ctx.sessions.fresh_id()?;
        let transcript = Transcript {
            client_random: hello.client_random,
            client_public: hello.client_public,
            server_random,
            server_public: *keypair.public(),
            session_id,
        };
        let report = issue_report(
            &ctx.attester.measurement,
            &transcript,
            ctx.attester.signer.as_ref(),
        )
        .map_err(|e| ProxyError::new(ErrorCode::AttestationFailed, e.to_string()))?;
        let (c2p, p2c) = derive_session_keys(&shared[..], &hello.client_random, &server_random);
        if ctx.sessions.insert(session_id, c2p, p2c).is_err() {
            // lost a race for the id; the report is bound to it, so redo
            continue;
        }
        tracing::debug!(session_id, "session established");
        return Ok(ServerHello {
            session_id,
            server_random,
            server_public: *keypair.public(),
            report,
            chain: ctx.attester.signer.chain().clone(),
        }
        .encode());
    }
}

fn open_password(
    ctx: &ProxyContext,
    envelope: &str,
    session_id: u64,
) -> Result<(std::sync::Arc<crate::session::Session>, Zeroizing<Vec<u8>>), ProxyError> {
    let session = ctx.sessions.lookup(session_id)?;
    let env = Envelope::decode(envelope)?;
    if env.session_id != session_id {
        return Err(ProxyError::new(
            ErrorCode::SessionConflict,
            "password envelope belongs to another session",
        ));
    }
    let password = env.open(&session.c2p).map_err(|_| {
        ProxyError::new(ErrorCode::DecryptionFailed, "password envelope did not authenticate")
    })?;
    Ok((session, Zeroizing::new(password)))
}

fn check_username(username: &str) -> Result<(), ProxyError> {
    if username.is_empty() || username.len() > MAX_USERNAME {
        return Err(ProxyError::new(
            ErrorCode::MalformedPayload,
            format!("username must be 1 to {MAX_USERNAME} bytes"),
        ));
    }
    Ok(())
}

async fn derive_kek(
    password: Zeroizing<Vec<u8>>,
    salt: [u8; 16],
    params: ArgonParams,
) -> Result<SymmetricKey, ProxyError> {
    tokio::task::spawn_blocking(move || kdf_password(&password, &salt, params))
        .await
        .map_err(|e| ProxyError::new(ErrorCode::Internal, e.to_string()))?
        .map_err(ProxyError::from)
}

fn user_filter(username: &str) -> String {
    render_literal(&Literal::Str(username.to_owned()))
}

pub async fn register(
    ctx: &ProxyContext,
    backend: &mut dyn BackendConnection,
    username: &str,
    envelope: &str,
    session_id: u64,
) -> Result<String, ProxyError> {
    check_username(username)?;
    let (session, password) = open_password(ctx, envelope, session_id)?;
    backend.query_all(CREATE_USERS).await?;

    let _guard = ctx.user_lock.lock().await;
    let (_, rows) = backend
        .query_all(&format!(
            "SELECT username FROM {USERS_TABLE} WHERE username = {}",
            user_filter(username)
        ))
        .await?;
    if !rows.is_empty() {
        return Err(ProxyError::new(
            ErrorCode::DuplicateUser,
            "username is already registered",
        ));
    }
    let ltk = SymmetricKey::generate()?;
    let salt: [u8; 16] = random_bytes()?;
    let params = ctx.argon;
    let kek = derive_kek(password, salt, params).await?;
    let (nonce, wrapped) = wrap_key(&kek, &ltk, &user_ad(username))?;
    backend
        .query_all(&format!(
            "INSERT INTO {USERS_TABLE} (username, salt, params, nonce, wrapped_key) VALUES ({}, '{}', '{}', '{}', '{}')",
            user_filter(username),
            hex::encode(salt),
            params,
            hex::encode(nonce),
            hex::encode(&wrapped),
        ))
        .await?;
    let mut state = session.state.lock().await;
    state.ltk = Some(ltk);
    state.user = Some(username.to_owned());
    Ok("OK".into())
}

fn login_failed() -> ProxyError {
    ProxyError::new(ErrorCode::LoginFailed, "invalid username or password")
}

struct StoredUser {
    salt: [u8; 16],
    params: ArgonParams,
    nonce: [u8; NONCE_LEN],
    wrapped: Vec<u8>,
}

fn parse_record(row: &[Option<String>]) -> Option<StoredUser> {
    let field = |i: usize| row.get(i).and_then(|c| c.as_deref());
    Some(StoredUser {
        salt: hex::decode(field(0)?).ok()?.try_into().ok()?,
        params: field(1)?.parse().ok()?,
        nonce: hex::decode(field(2)?).ok()?.try_into().ok()?,
        wrapped: hex::decode(field(3)?).ok()?,
    })
}

pub async fn login(
    ctx: &ProxyContext,
    backend: &mut dyn BackendConnection,
    username: &str,
    envelope: &str,
    session_id: u64,
) -> Result<String, ProxyError> {
    let (session, password) = open_password(ctx, envelope, session_id)?;
    backend.query_all(CREATE_USERS).await?;
    let (_, rows) = backend
        .query_all(&format!(
            "SELECT salt, params, nonce, wrapped_key FROM {USERS_TABLE} WHERE username = {}",
            user_filter(username)
        ))
        .await?;
    let record = rows.first().and_then(|r| parse_record(r));
    let Some(record) = record else {
        // same work as a real attempt so timing does not reveal unknown users
        let _ = derive_kek(password, [0; 16], ctx.argon).await;
        return Err(login_failed());
    };
    let kek = derive_kek(password, record.salt, record.params).await?;
    let ltk = unwrap_key(&kek, &record.nonce, &record.wrapped, &user_ad(username))
        .map_err(|_| login_failed())?;
    let mut state = session.state.lock().await;
    state.ltk = Some(ltk);
    state.user = Some(username.to_owned());
    Ok("OK".into())
}
