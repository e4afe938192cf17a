//! Truncated keyed-hash blind indices.
//!
//! A blind index is `HMAC-SHA256(bidx_key, plaintext)` cut down to `n` bits.
//! Truncation is what makes it safe to store next to the ciphertext: with
//! `r` records about `r * 2^-n` other values share each index value, so an
//! equal index never proves an equal plaintext. The database narrows a
//! filter to that handful of rows and the proxy re-checks the plaintext.

use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::crypto::SymmetricKey;

pub const MAX_BITS: u32 = 256;
pub const COMPANION_SUFFIX: &str = "__bidx";

/// Default name of the column holding the blind index of `column`.
pub fn companion_name(column: &str) -> String {
    format!("{column}{COMPANION_SUFFIX}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindIndexSpec {
    pub table: String,
    pub column: String,
    pub bits: u32,
    pub companion: String,
}

impl BlindIndexSpec {
    pub fn new(table: impl Into<String>, column: impl Into<String>, bits: u32) -> Self {
        let column = column.into();
        Self {
            table: table.into(),
            companion: companion_name(&column),
            column,
            bits,
        }
    }

    pub fn byte_len(&self) -> usize {
        self.bits.div_ceil(8) as usize
    }
}

/// `ceil(n/8)` bytes with the surplus high bits of the first byte cleared.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BidxValue(Vec<u8>);

impl BidxValue {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Lowercase hex, the form stored in the companion column.
    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

pub fn compute_bidx(bidx_key: &SymmetricKey, plaintext: &[u8], spec: &BlindIndexSpec) -> BidxValue {
    assert!(
        (1..=MAX_BITS).contains(&spec.bits),
        "blind index width {} out of range",
        spec.bits
    );
    let mut mac =
        <Hmac<Sha256> as Mac>::new_from_slice(bidx_key.as_bytes()).expect("any key length works");
    mac.update(plaintext);
    let digest = mac.finalize().into_bytes();
    let len = spec.byte_len();
    let mut out = digest[..len].to_vec();
    let surplus = (8 * len as u32) - spec.bits;
    out[0] &= 0xFFu8 >> surplus;
    BidxValue(out)
}

/// Mean number of other records sharing a blind-index value: `r * 2^-n`.
pub fn expected_collisions(records: u64, bits: u32) -> f64 {
    records as f64 * (-(bits as f64)).exp2()
}

/// Smallest `n >= 1` with `n >= log2(r) - log2(c)`, i.e. `c * 2^n >= r`.
pub fn min_bits(records: u64, target_collisions: f64) -> u32 {
    assert!(records >= 1, "record count must be positive");
    assert!(target_collisions >= 1.0, "target collisions must be >= 1");
    let r = records as f64;
    let mut n = 1u32;
    while n < MAX_BITS && target_collisions * (n as f64).exp2() < r {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecVerdict {
    Ok,
    /// Fewer than two expected collisions: equal index values start to
    /// reveal equal plaintexts.
    TooRevealing,
    /// More than `sqrt(r)` expected collisions: the index no longer narrows
    /// the scan meaningfully.
    TooSlow,
}

pub fn validate_spec(records: u64, bits: u32) -> SpecVerdict {
    let c = expected_collisions(records, bits);
    if c < 2.0 {
        SpecVerdict::TooRevealing
    } else if c > (records as f64).sqrt() {
        SpecVerdict::TooSlow
    } else {
        SpecVerdict::Ok
    }
}
