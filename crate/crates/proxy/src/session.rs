//! Live sessions keyed by their 64-bit id.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use blindex_core::crypto::{random_bytes, Direction, SessionCipherState, SymmetricKey};
use blindex_core::{ErrorCode, ProxyError};
use parking_lot::RwLock;
use tokio::sync::Mutex;

pub const DEFAULT_TTL: Duration = Duration::from_secs(4 * 60 * 60);

/// Mutable half of a session. Holding its lock serializes encryption under
/// the proxy-to-client key.
pub struct SessionState {
    pub p2c: SessionCipherState,
    pub ltk: Option<SymmetricKey>,
    pub user: Option<String>,
}

pub struct Session {
    pub id: u64,
    pub c2p: SymmetricKey,
    pub state: Mutex<SessionState>,
    pub created_at: Instant,
    pub expires_at: Instant,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("expires_at", &self.expires_at)
            .finish_non_exhaustive()
    }
}

impl Session {
    /// Drops the long-term key, e.g. on expiry.
    pub fn forget_ltk(&self) {
        if let Ok(mut state) = self.state.try_lock() {
            state.ltk = None;
            state.user = None;
        }
    }
}

// Ids of expired sessions are remembered so callers get `session_expired`
// rather than `session_not_found`; the set is bounded.
const TOMBSTONE_CAP: usize = 100_000;

pub struct SessionTable {
    live: RwLock<HashMap<u64, Arc<Session>>>,
    expired: RwLock<HashSet<u64>>,
    ttl: Duration,
}

impl SessionTable {
    pub fn new(ttl: Duration) -> Self {
        Self {
            live: RwLock::new(HashMap::new()),
            expired: RwLock::new(HashSet::new()),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// A random id not currently in use. The caller inserts it with
    /// [`SessionTable::insert`], which fails if another task took it first.
    pub fn fresh_id(&self) -> Result<u64, ProxyError> {
        loop {
            let id = u64::from_be_bytes(random_bytes()?);
            if !self.live.read().contains_key(&id) {
                return Ok(id);
            }
        }
    }

    pub fn insert(
        &self,
        id: u64,
        c2p: SymmetricKey,
        p2c: SymmetricKey,
    ) -> Result<Arc<Session>, ProxyError> {
        self.insert_at(id, c2p, p2c, Instant::now())
    }

    pub fn insert_at(
        &self,
        id: u64,
        c2p: SymmetricKey,
        p2c: SymmetricKey,
        now: Instant,
    ) -> Result<Arc<Session>, ProxyError> {
        let session = Arc::new(Session {
            id,
            c2p,
            state: Mutex::new(SessionState {
                p2c: SessionCipherState::new(p2c, Direction::ProxyToClient),
                ltk: None,
                user: None,
            }),
            created_at: now,
            expires_at: now + self.ttl,
        });
        let mut live = self.live.write();
        if live.contains_key(&id) {
            return Err(ProxyError::new(ErrorCode::Internal, "session id collision"));
        }
        live.insert(id, session.clone());
        Ok(session)
    }

    pub fn lookup(&self, id: u64) -> Result<Arc<Session>, ProxyError> {
        self.lookup_at(id, Instant::now())
    }

    pub fn lookup_at(&self, id: u64, now: Instant) -> Result<Arc<Session>, ProxyError> {
        let found = self.live.read().get(&id).cloned();
        match found {
            Some(s) if now < s.expires_at => Ok(s),
            Some(_) => {
                self.expire(id);
                Err(expired(id))
            }
            None if self.expired.read().contains(&id) => Err(expired(id)),
            None => Err(ProxyError::new(
                ErrorCode::SessionNotFound,
                format!("unknown session {id}"),
            )),
        }
    }

    fn expire(&self, id: u64) {
        if let Some(s) = self.live.write().remove(&id) {
            s.forget_ltk();
        }
        let mut tomb = self.expired.write();
        if tomb.len() >= TOMBSTONE_CAP {
            tomb.clear();
        }
        tomb.insert(id);
    }

    /// Removes every session past its expiry; returns how many.
    pub fn purge_expired(&self, now: Instant) -> usize {
        let ids: Vec<u64> = self
            .live
            .read()
            .values()
            .filter(|s| now >= s.expires_at)
            .map(|s| s.id)
            .collect();
        for id in &ids {
            self.expire(*id);
        }
        ids.len()
    }

    pub fn len(&self) -> usize {
        self.live.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn expired(id: u64) -> ProxyError {
    ProxyError::new(ErrorCode::SessionExpired, format!("session {id} has expired"))
}
