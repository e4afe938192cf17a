//! Core building blocks of the blindex encryption proxy.
//!
//! The proxy sits between an untrusted application backend and an untrusted
//! database. Selected columns are encrypted per user; equality filters on
//! those columns are served by truncated keyed hashes ("blind indices") that
//! the database can match, followed by an exact re-filter on decrypted
//! plaintext inside the proxy.
//!
//! This crate holds everything that does not touch the network:
//!
//! - [`crypto`]: primitives and the key hierarchy
//! - [`blind_index`]: blind-index computation and sizing helpers
//! - [`attestation`]: simulated attestation reports bound to the key exchange
//! - [`schema`]: which columns are encrypted and how they are indexed
//! - [`envelope`]: the session-layer value format shared with clients
//! - [`handshake`]: the key-exchange request and response layouts
//! - [`sql`]: the SQL subset parser, renderer, classifier and rewriter
//! - [`pipeline`]: the streaming decrypt / re-filter / re-encrypt stage
//! - [`wire`]: the newline-delimited JSON protocol messages

pub mod attestation;
pub mod blind_index;
pub mod crypto;
pub mod envelope;
pub mod error;
pub mod handshake;
pub mod pipeline;
pub mod schema;
pub mod sql;
pub mod wire;

pub use error::{ErrorCode, ProxyError};
