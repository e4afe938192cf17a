//! Simulated SEV-SNP style attestation bound to the key exchange.
//!
//! The proxy asks its secure processor for a report whose `report_data`
//! carries `SHA-256(transcript)`; the client checks the report signature
//! against a pinned three-level certificate chain, the measurement against
//! the set of builds it trusts, and the transcript hash against the
//! exchange it actually performed. A man in the middle that swaps a public
//! key therefore breaks the transcript check.
//!
//! Binary layouts (all fixed width):
//!
//! ```text
//! report      = version u32 LE | measurement 48 | report_data 64 | chip_id 64 | sig 96
//! certificate = name 32 (NUL padded) | P-384 public key 97 (SEC1 uncompressed) | sig 96
//! chain       = leaf | intermediate | root
//! ```
//!
//! Signatures are ECDSA P-384 / SHA-384 in fixed `r || s` form. The report
//! signature covers the first 180 bytes; a certificate signature covers name
//! and public key and is made by the parent (the root signs itself).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use p384::ecdsa::signature::{Signer, Verifier};
use p384::ecdsa::{Signature, SigningKey, VerifyingKey};
use sha2::{Digest, Sha256};

use crate::crypto::{hkdf, PUBLIC_KEY_LEN};

pub const TRANSCRIPT_LEN: usize = 32 + PUBLIC_KEY_LEN + 32 + PUBLIC_KEY_LEN + 8;
pub const MEASUREMENT_LEN: usize = 48;
pub const REPORT_DATA_LEN: usize = 64;
pub const CHIP_ID_LEN: usize = 64;
pub const SIGNATURE_LEN: usize = 96;
pub const REPORT_SIGNED_LEN: usize = 4 + MEASUREMENT_LEN + REPORT_DATA_LEN + CHIP_ID_LEN;
pub const REPORT_LEN: usize = REPORT_SIGNED_LEN + SIGNATURE_LEN;
pub const CERT_NAME_LEN: usize = 32;
pub const CERT_KEY_LEN: usize = 97;
pub const CERT_LEN: usize = CERT_NAME_LEN + CERT_KEY_LEN + SIGNATURE_LEN;
pub const CHAIN_LEN: usize = 3 * CERT_LEN;
pub const REPORT_VERSION: u32 = 1;

pub type Measurement = [u8; MEASUREMENT_LEN];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttestationError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("invalid signing key")]
    Key,
    #[error("fixture error: {0}")]
    Fixture(String),
}

/// Everything both sides saw during the key exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub client_random: [u8; 32],
    pub client_public: [u8; PUBLIC_KEY_LEN],
    pub server_random: [u8; 32],
    pub server_public: [u8; PUBLIC_KEY_LEN],
    pub session_id: u64,
}

impl Transcript {
    pub fn to_bytes(&self) -> [u8; TRANSCRIPT_LEN] {
        let mut out = [0u8; TRANSCRIPT_LEN];
        let mut at = 0;
        for part in [
            &self.client_random[..],
            &self.client_public[..],
            &self.server_random[..],
            &self.server_public[..],
            &self.session_id.to_be_bytes()[..],
        ] {
            out[at..at + part.len()].copy_from_slice(part);
            at += part.len();
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttestationError> {
        if bytes.len() != TRANSCRIPT_LEN {
            return Err(AttestationError::Length {
                expected: TRANSCRIPT_LEN,
                actual: bytes.len(),
            });
        }
        let (client_random, rest) = bytes.split_at(32);
        let (client_public, rest) = rest.split_at(PUBLIC_KEY_LEN);
        let (server_random, rest) = rest.split_at(32);
        let (server_public, sid) = rest.split_at(PUBLIC_KEY_LEN);
        Ok(Self {
            client_random: client_random.try_into().expect("split"),
            client_public: client_public.try_into().expect("split"),
            server_random: server_random.try_into().expect("split"),
            server_public: server_public.try_into().expect("split"),
            session_id: u64::from_be_bytes(sid.try_into().expect("split")),
        })
    }
}

pub fn transcript_hash(transcript: &Transcript) -> [u8; 32] {
    Sha256::digest(transcript.to_bytes()).into()
}

/// `SHA-256(transcript)` left-aligned in 64 zeroed bytes.
pub fn report_data_for(transcript: &Transcript) -> [u8; REPORT_DATA_LEN] {
    let mut data = [0u8; REPORT_DATA_LEN];
    data[..32].copy_from_slice(&transcript_hash(transcript));
    data
}

#[derive(Clone, PartialEq, Eq)]
pub struct AttestationReport {
    pub version: u32,
    pub measurement: Measurement,
    pub report_data: [u8; REPORT_DATA_LEN],
    pub chip_id: [u8; CHIP_ID_LEN],
    pub signature: [u8; SIGNATURE_LEN],
}

impl fmt::Debug for AttestationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AttestationReport")
            .field("version", &self.version)
            .field("measurement", &hex::encode(self.measurement))
            .field("report_data", &hex::encode(self.report_data))
            .finish_non_exhaustive()
    }
}

impl AttestationReport {
    fn signed_bytes(&self) -> [u8; REPORT_SIGNED_LEN] {
        let mut out = [0u8; REPORT_SIGNED_LEN];
        out[..4].copy_from_slice(&self.version.to_le_bytes());
        out[4..52].copy_from_slice(&self.measurement);
        out[52..116].copy_from_slice(&self.report_data);
        out[116..].copy_from_slice(&self.chip_id);
        out
    }

    pub fn to_bytes(&self) -> [u8; REPORT_LEN] {
        let mut out = [0u8; REPORT_LEN];
        out[..REPORT_SIGNED_LEN].copy_from_slice(&self.signed_bytes());
        out[REPORT_SIGNED_LEN..].copy_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttestationError> {
        if bytes.len() != REPORT_LEN {
            return Err(AttestationError::Length {
                expected: REPORT_LEN,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            version: u32::from_le_bytes(bytes[..4].try_into().expect("4")),
            measurement: bytes[4..52].try_into().expect("48"),
            report_data: bytes[52..116].try_into().expect("64"),
            chip_id: bytes[116..180].try_into().expect("64"),
            signature: bytes[180..].try_into().expect("96"),
        })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Certificate {
    pub name: [u8; CERT_NAME_LEN],
    pub public_key: [u8; CERT_KEY_LEN],
    pub signature: [u8; SIGNATURE_LEN],
}

impl fmt::Debug for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Certificate")
            .field("name", &self.name_str())
            .finish_non_exhaustive()
    }
}

impl Certificate {
    fn issue(name: &str, subject: &VerifyingKey, issuer: &SigningKey) -> Self {
        let mut cert = Certificate {
            name: [0u8; CERT_NAME_LEN],
            public_key: encode_verifying_key(subject),
            signature: [0u8; SIGNATURE_LEN],
        };
        let n = name.len().min(CERT_NAME_LEN);
        cert.name[..n].copy_from_slice(&name.as_bytes()[..n]);
        let sig: Signature = issuer.sign(&cert.tbs());
        cert.signature.copy_from_slice(&sig.to_bytes());
        cert
    }

    fn tbs(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CERT_NAME_LEN + CERT_KEY_LEN);
        out.extend_from_slice(&self.name);
        out.extend_from_slice(&self.public_key);
        out
    }

    pub fn name_str(&self) -> String {
        let end = self.name.iter().position(|&b| b == 0).unwrap_or(CERT_NAME_LEN);
        String::from_utf8_lossy(&self.name[..end]).into_owned()
    }

    pub fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_sec1_bytes(&self.public_key).ok()
    }

    fn signed_by(&self, issuer: &Certificate) -> bool {
        let (Some(key), Ok(sig)) = (
            issuer.verifying_key(),
            Signature::from_slice(&self.signature),
        ) else {
            return false;
        };
        key.verify(&self.tbs(), &sig).is_ok()
    }

    pub fn to_bytes(&self) -> [u8; CERT_LEN] {
        let mut out = [0u8; CERT_LEN];
        out[..CERT_NAME_LEN].copy_from_slice(&self.name);
        out[CERT_NAME_LEN..CERT_NAME_LEN + CERT_KEY_LEN].copy_from_slice(&self.public_key);
        out[CERT_NAME_LEN + CERT_KEY_LEN..].copy_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttestationError> {
        if bytes.len() != CERT_LEN {
            return Err(AttestationError::Length {
                expected: CERT_LEN,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            name: bytes[..CERT_NAME_LEN].try_into().expect("name"),
            public_key: bytes[CERT_NAME_LEN..CERT_NAME_LEN + CERT_KEY_LEN]
                .try_into()
                .expect("key"),
            signature: bytes[CERT_NAME_LEN + CERT_KEY_LEN..].try_into().expect("sig"),
        })
    }
}

fn encode_verifying_key(key: &VerifyingKey) -> [u8; CERT_KEY_LEN] {
    key.to_encoded_point(false)
        .as_bytes()
        .try_into()
        .expect("uncompressed P-384 point is 97 bytes")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertChain {
    pub leaf: Certificate,
    pub intermediate: Certificate,
    pub root: Certificate,
}

impl CertChain {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CHAIN_LEN);
        out.extend_from_slice(&self.leaf.to_bytes());
        out.extend_from_slice(&self.intermediate.to_bytes());
        out.extend_from_slice(&self.root.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttestationError> {
        if bytes.len() != CHAIN_LEN {
            return Err(AttestationError::Length {
                expected: CHAIN_LEN,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            leaf: Certificate::from_bytes(&bytes[..CERT_LEN])?,
            intermediate: Certificate::from_bytes(&bytes[CERT_LEN..2 * CERT_LEN])?,
            root: Certificate::from_bytes(&bytes[2 * CERT_LEN..])?,
        })
    }

    fn validates_to(&self, pinned_root: &Certificate) -> bool {
        self.root == *pinned_root
            && self.root.signed_by(&self.root)
            && self.intermediate.signed_by(&self.root)
            && self.leaf.signed_by(&self.intermediate)
    }
}

/// Source of signed reports. The simulated signer below stands in for the
/// secure processor; a hardware-backed provider implements the same trait.
pub trait ReportSigner: Send + Sync {
    fn chip_id(&self) -> [u8; CHIP_ID_LEN];
    fn sign(&self, message: &[u8]) -> Result<[u8; SIGNATURE_LEN], AttestationError>;
    fn chain(&self) -> &CertChain;
}

pub fn issue_report(
    measurement: &Measurement,
    transcript: &Transcript,
    signer: &dyn ReportSigner,
) -> Result<AttestationReport, AttestationError> {
    let mut report = AttestationReport {
        version: REPORT_VERSION,
        measurement: *measurement,
        report_data: report_data_for(transcript),
        chip_id: signer.chip_id(),
        signature: [0u8; SIGNATURE_LEN],
    };
    report.signature = signer.sign(&report.signed_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    BadChain,
    BadSignature,
    BadMeasurement,
    TranscriptMismatch,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadChain => "bad_chain",
            RejectReason::BadSignature => "bad_signature",
            RejectReason::BadMeasurement => "bad_measurement",
            RejectReason::TranscriptMismatch => "transcript_mismatch",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

/// Checks, in order: chain to the pinned root, report signature by the
/// leaf, measurement membership, transcript binding. The first failure
/// decides the reason.
pub fn verify_report(
    report: &AttestationReport,
    chain: &CertChain,
    pinned_root: &Certificate,
    expected_measurements: &HashSet<Measurement>,
    transcript: &Transcript,
) -> Verdict {
    if !chain.validates_to(pinned_root) {
        return Verdict::Rejected(RejectReason::BadChain);
    }
    let signature_ok = match (
        chain.leaf.verifying_key(),
        Signature::from_slice(&report.signature),
    ) {
        (Some(key), Ok(sig)) => key.verify(&report.signed_bytes(), &sig).is_ok(),
        _ => false,
    };
    if !signature_ok {
        return Verdict::Rejected(RejectReason::BadSignature);
    }
    if !expected_measurements.contains(&report.measurement) {
        return Verdict::Rejected(RejectReason::BadMeasurement);
    }
    if report.report_data != report_data_for(transcript) {
        return Verdict::Rejected(RejectReason::TranscriptMismatch);
    }
    Verdict::Accepted
}

/// Software stand-in for the secure processor's report key.
pub struct SimulatedSigner {
    key: SigningKey,
    chain: CertChain,
    chip_id: [u8; CHIP_ID_LEN],
}

impl fmt::Debug for SimulatedSigner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulatedSigner")
            .field("chain", &self.chain)
            .finish_non_exhaustive()
    }
}

impl ReportSigner for SimulatedSigner {
    fn chip_id(&self) -> [u8; CHIP_ID_LEN] {
        self.chip_id
    }

    fn sign(&self, message: &[u8]) -> Result<[u8; SIGNATURE_LEN], AttestationError> {
        let sig: Signature = self.key.sign(message);
        let mut out = [0u8; SIGNATURE_LEN];
        out.copy_from_slice(&sig.to_bytes());
        Ok(out)
    }

    fn chain(&self) -> &CertChain {
        &self.chain
    }
}

fn seeded_signing_key(seed: &[u8], label: &str) -> SigningKey {
    (0u32..)
        .find_map(|ctr| {
            let info = format!("{label}/{ctr}");
            let scalar = hkdf(seed, b"blindex-sim-attestation", info.as_bytes(), 48).ok()?;
            SigningKey::from_slice(&scalar).ok()
        })
        .expect("a valid scalar is found within a few attempts")
}

/// Label hashed into the measurement a simulated proxy reports.
pub const SIMULATED_MEASUREMENT_LABEL: &str = "blindex-proxy/simulated";

/// Measurement for a simulated build identified by `label`.
pub fn simulated_measurement(label: &str) -> Measurement {
    let digest = hkdf(label.as_bytes(), b"", b"measurement", MEASUREMENT_LEN)
        .expect("48 bytes within HKDF limit");
    digest.try_into().expect("48")
}

impl SimulatedSigner {
    /// Deterministically builds a root / intermediate / leaf hierarchy
    /// from a seed.
    pub fn generate(seed: &[u8]) -> Self {
        let root_key = seeded_signing_key(seed, "root");
        let inter_key = seeded_signing_key(seed, "intermediate");
        let leaf_key = seeded_signing_key(seed, "leaf");
        let root = Certificate::issue("SIM-ARK", root_key.verifying_key(), &root_key);
        let intermediate = Certificate::issue("SIM-ASK", inter_key.verifying_key(), &root_key);
        let leaf = Certificate::issue("SIM-VCEK", leaf_key.verifying_key(), &inter_key);
        let chip = hkdf(seed, b"", b"chip-id", CHIP_ID_LEN).expect("64 bytes");
        Self {
            key: leaf_key,
            chain: CertChain {
                leaf,
                intermediate,
                root,
            },
            chip_id: chip.try_into().expect("64"),
        }
    }

    pub fn root(&self) -> &Certificate {
        &self.chain.root
    }

    /// Writes `root.cert`, `chain.hex`, `vcek.key`, `chip_id.hex` (hex text).
    pub fn write_fixtures(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("root.cert"), hex::encode(self.chain.root.to_bytes()) + "\n")?;
        fs::write(dir.join("chain.hex"), hex::encode(self.chain.to_bytes()) + "\n")?;
        fs::write(dir.join("vcek.key"), hex::encode(self.key.to_bytes()) + "\n")?;
        fs::write(dir.join("chip_id.hex"), hex::encode(self.chip_id) + "\n")?;
        Ok(())
    }

    pub fn load_fixtures(dir: &Path) -> Result<Self, AttestationError> {
        let chain = CertChain::from_bytes(&read_hex(&dir.join("chain.hex"))?)?;
        let key = SigningKey::from_slice(&read_hex(&dir.join("vcek.key"))?)
            .map_err(|_| AttestationError::Key)?;
        if encode_verifying_key(key.verifying_key()) != chain.leaf.public_key {
            return Err(AttestationError::Fixture(
                "vcek.key does not match the chain leaf".into(),
            ));
        }
        let chip = read_hex(&dir.join("chip_id.hex"))?;
        let chip_id = chip.as_slice().try_into().map_err(|_| AttestationError::Length {
            expected: CHIP_ID_LEN,
            actual: chip.len(),
        })?;
        Ok(Self {
            key,
            chain,
            chip_id,
        })
    }
}

pub fn load_pinned_root(dir: &Path) -> Result<Certificate, AttestationError> {
    Certificate::from_bytes(&read_hex(&dir.join("root.cert"))?)
}

fn read_hex(path: &Path) -> Result<Vec<u8>, AttestationError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AttestationError::Fixture(format!("{}: {e}", path.display())))?;
    hex::decode(text.trim())
        .map_err(|e| AttestationError::Fixture(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transcript() -> Transcript {
        Transcript {
            client_random: [1; 32],
            client_public: [2; 65],
            server_random: [3; 32],
            server_public: [4; 65],
            session_id: 77,
        }
    }

    #[test]
    fn layouts_have_documented_sizes() {
        assert_eq!(TRANSCRIPT_LEN, 202);
        assert_eq!(REPORT_LEN, 276);
        assert_eq!(CERT_LEN, 225);
        assert_eq!(CHAIN_LEN, 675);
        let t = transcript();
        assert_eq!(Transcript::from_bytes(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn issue_then_verify() {
        let signer = SimulatedSigner::generate(b"unit");
        let m = simulated_measurement("build-1");
        let report = issue_report(&m, &transcript(), &signer).unwrap();
        let expected = HashSet::from([m]);
        assert_eq!(
            verify_report(&report, signer.chain(), signer.root(), &expected, &transcript()),
            Verdict::Accepted
        );
        let parsed = AttestationReport::from_bytes(&report.to_bytes()).unwrap();
        assert_eq!(parsed, report);

        let other = Transcript {
            session_id: 78,
            ..transcript()
        };
        assert_eq!(
            verify_report(&report, signer.chain(), signer.root(), &expected, &other),
            Verdict::Rejected(RejectReason::TranscriptMismatch)
        );
        let unexpected = HashSet::from([simulated_measurement("build-2")]);
        assert_eq!(
            verify_report(&report, signer.chain(), signer.root(), &unexpected, &transcript()),
            Verdict::Rejected(RejectReason::BadMeasurement)
        );
    }

    #[test]
    fn foreign_root_is_a_bad_chain() {
        let signer = SimulatedSigner::generate(b"unit");
        let rogue = SimulatedSigner::generate(b"rogue");
        let m = simulated_measurement("build-1");
        let report = issue_report(&m, &transcript(), &rogue).unwrap();
        assert_eq!(
            verify_report(
                &report,
                rogue.chain(),
                signer.root(),
                &HashSet::from([m]),
                &transcript()
            ),
            Verdict::Rejected(RejectReason::BadChain)
        );
    }

    #[test]
    fn generation_is_deterministic_and_fixtures_round_trip() {
        let a = SimulatedSigner::generate(b"seed");
        let b = SimulatedSigner::generate(b"seed");
        assert_eq!(a.chain(), b.chain());
        let dir = std::env::temp_dir().join(format!("bx-fixture-{}", std::process::id()));
        a.write_fixtures(&dir).unwrap();
        let loaded = SimulatedSigner::load_fixtures(&dir).unwrap();
        assert_eq!(loaded.chain(), a.chain());
        assert_eq!(load_pinned_root(&dir).unwrap(), a.chain().root);
        fs::remove_dir_all(&dir).ok();
    }
}
