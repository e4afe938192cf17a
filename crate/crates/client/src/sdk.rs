use std::collections::HashSet;

use blindex_core::attestation::{verify_report, Certificate, Measurement, Verdict};
use blindex_core::crypto::{
    derive_session_keys, ecdh_keygen, ecdh_shared, random_bytes, Direction, KeyPair,
    SessionCipherState, SymmetricKey,
};
use blindex_core::envelope::Envelope;
use blindex_core::handshake::{ClientHello, ServerHello};
use blindex_core::sql::{render_literal, Literal};
use blindex_core::wire::QueryOutcome;
use zeroize::Zeroizing;

use crate::{ClientError, Transport};

/// Client half of the key exchange. Holds the ephemeral secret until the
/// proxy's answer has been appraised.
pub struct Handshake {
    keypair: KeyPair,
    hello: ClientHello,
}

impl Handshake {
    pub fn new() -> Result<Self, ClientError> {
        let keypair = ecdh_keygen()?;
        let hello = ClientHello {
            client_random: random_bytes()?,
            client_public: *keypair.public(),
        };
        Ok(Self { keypair, hello })
    }

    pub fn hello(&self) -> &ClientHello {
        &self.hello
    }

    pub fn sql(&self) -> String {
        format!("SELECT KEY_EXCHANGE('{}')", self.hello.encode())
    }

    /// Verifies the attestation against the transcript rebuilt from our own
    /// hello and only then derives the session keys. On rejection the
    /// ephemeral secret is dropped with `self`.
    pub fn finish(
        self,
        response: &str,
        expected_measurements: &HashSet<Measurement>,
        pinned_root: &Certificate,
    ) -> Result<ClientSession, ClientError> {
        let server = ServerHello::decode(response).map_err(ClientError::Server)?;
        let transcript = server.transcript(&self.hello);
        match verify_report(
            &server.report,
            &server.chain,
            pinned_root,
            expected_measurements,
            &transcript,
        ) {
            Verdict::Accepted => {}
            Verdict::Rejected(reason) => return Err(ClientError::Attestation(reason)),
        }
        let shared = Zeroizing::new(ecdh_shared(&self.keypair, &server.server_public)?);
        let (c2p, p2c) =
            derive_session_keys(&shared[..], &self.hello.client_random, &server.server_random);
        Ok(ClientSession {
            session_id: server.session_id,
            c2p: Some(SessionCipherState::new(c2p, Direction::ClientToProxy)),
            p2c: Some(p2c),
            verified: true,
            sealed: 0,
        })
    }
}

/// Runs the whole exchange through `transport`.
pub async fn start_session<T: Transport + ?Sized>(
    transport: &mut T,
    expected_measurements: &HashSet<Measurement>,
    pinned_root: &Certificate,
) -> Result<ClientSession, ClientError> {
    let handshake = Handshake::new()?;
    let outcome = transport.query(&handshake.sql()).await?;
    let response = single_cell(&outcome)
        .ok_or_else(|| ClientError::Protocol("KEY_EXCHANGE returned no value".into()))?;
    handshake.finish(response, expected_measurements, pinned_root)
}

fn single_cell(outcome: &QueryOutcome) -> Option<&str> {
    match outcome.rows.as_slice() {
        [row] if row.len() == 1 => row[0].as_deref(),
        _ => None,
    }
}

/// An attested session with the proxy.
pub struct ClientSession {
    session_id: u64,
    c2p: Option<SessionCipherState>,
    p2c: Option<SymmetricKey>,
    verified: bool,
    sealed: u64,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("session_id", &self.session_id)
            .field("verified", &self.verified)
            .finish_non_exhaustive()
    }
}

impl ClientSession {
    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    /// Number of envelopes produced so far.
    pub fn envelopes_sealed(&self) -> u64 {
        self.sealed
    }

    /// Erases the keys, after which every operation fails with `Unverified`.
    pub fn invalidate(&mut self) {
        self.verified = false;
        self.c2p = None;
        self.p2c = None;
    }

    pub fn encrypt_value(&mut self, plaintext: &[u8]) -> Result<Envelope, ClientError> {
        let state = match (&mut self.c2p, self.verified) {
            (Some(state), true) => state,
            _ => return Err(ClientError::Unverified),
        };
        let env = Envelope::seal(state, self.session_id, plaintext)?;
        self.sealed += 1;
        Ok(env)
    }

    /// Base64 envelope text for `plaintext`.
    pub fn seal(&mut self, plaintext: &str) -> Result<String, ClientError> {
        Ok(self.encrypt_value(plaintext.as_bytes())?.encode())
    }

    /// Quoted SQL string literal holding an envelope for `plaintext`.
    pub fn literal(&mut self, plaintext: &str) -> Result<String, ClientError> {
        Ok(format!("'{}'", self.seal(plaintext)?))
    }

    pub fn decrypt_value(&self, envelope: &Envelope) -> Result<Vec<u8>, ClientError> {
        let key = match (&self.p2c, self.verified) {
            (Some(key), true) => key,
            _ => return Err(ClientError::Unverified),
        };
        if envelope.session_id != self.session_id {
            return Err(ClientError::WrongSession {
                expected: self.session_id,
                got: envelope.session_id,
            });
        }
        Ok(envelope.open(key)?)
    }

    /// Decrypts envelope text into a UTF-8 string.
    pub fn open(&self, text: &str) -> Result<String, ClientError> {
        let env = Envelope::decode(text)
            .map_err(|e| ClientError::Protocol(format!("not an envelope: {e}")))?;
        let plain = self.decrypt_value(&env)?;
        String::from_utf8(plain).map_err(|_| ClientError::Protocol("plaintext is not UTF-8".into()))
    }

    /// Decrypts a result cell if it holds an envelope, otherwise returns it
    /// unchanged.
    pub fn decrypt_cell(&self, cell: Option<&str>) -> Result<Option<String>, ClientError> {
        match cell {
            Some(text) if Envelope::looks_like(text) => self.open(text).map(Some),
            other => Ok(other.map(str::to_owned)),
        }
    }

    pub fn decrypt_outcome(&self, outcome: QueryOutcome) -> Result<QueryOutcome, ClientError> {
        let rows = outcome
            .rows
            .iter()
            .map(|row| row.iter().map(|c| self.decrypt_cell(c.as_deref())).collect())
            .collect::<Result<_, _>>()?;
        Ok(QueryOutcome { rows, ..outcome })
    }

    pub async fn register<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        username: &str,
        password: &str,
    ) -> Result<(), ClientError> {
        self.user_procedure(transport, "REGISTER", username, password)
            .await
    }

    pub async fn login<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        username: &str,
        password: &str,
    ) -> Result<(), ClientError> {
        self.user_procedure(transport, "LOGIN", username, password)
            .await
    }

    async fn user_procedure<T: Transport + ?Sized>(
        &mut self,
        transport: &mut T,
        name: &'static str,
        username: &str,
        password: &str,
    ) -> Result<(), ClientError> {
        let env = self.encrypt_value(password.as_bytes())?.encode();
        let sql = format!(
            "SELECT {name}({}, '{env}', {})",
            render_literal(&Literal::Str(username.to_owned())),
            self.session_id
        );
        let outcome = transport.query(&sql).await?;
        match single_cell(&outcome) {
            Some("OK") => Ok(()),
            _ => Err(ClientError::ProcedureFailed(name)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use blindex_core::attestation::{
        issue_report, simulated_measurement, AttestationReport, RejectReason, ReportSigner,
        SimulatedSigner, Transcript,
    };

    struct Proxy {
        signer: SimulatedSigner,
        measurement: Measurement,
        swap_public: bool,
    }

    impl Proxy {
        fn answer(&self, sql: &str) -> (String, SymmetricKey, SymmetricKey) {
            let payload = sql
                .trim_start_matches("SELECT KEY_EXCHANGE('")
                .trim_end_matches("')");
            let hello = ClientHello::decode(payload).unwrap();
            let kp = ecdh_keygen().unwrap();
            let server_random: [u8; 32] = random_bytes().unwrap();
            let transcript = Transcript {
                client_random: hello.client_random,
                client_public: hello.client_public,
                server_random,
                server_public: *kp.public(),
                session_id: 99,
            };
            let report: AttestationReport =
                issue_report(&self.measurement, &transcript, &self.signer).unwrap();
            let shared = ecdh_shared(&kp, &hello.client_public).unwrap();
            let (c2p, p2c) = derive_session_keys(&shared, &hello.client_random, &server_random);
            let server_public = if self.swap_public {
                *ecdh_keygen().unwrap().public()
            } else {
                *kp.public()
            };
            let resp = ServerHello {
                session_id: 99,
                server_random,
                server_public,
                report,
                chain: self.signer.chain().clone(),
            };
            (resp.encode(), c2p, p2c)
        }
    }

    fn expected() -> HashSet<Measurement> {
        [simulated_measurement("blindex-proxy")].into()
    }

    #[test]
    fn honest_exchange_agrees_on_keys() {
        let proxy = Proxy {
            signer: SimulatedSigner::generate(b"t"),
            measurement: simulated_measurement("blindex-proxy"),
            swap_public: false,
        };
        let hs = Handshake::new().unwrap();
        let (resp, c2p, p2c) = proxy.answer(&hs.sql());
        let mut session = hs.finish(&resp, &expected(), proxy.signer.root()).unwrap();
        assert!(session.is_verified());
        assert_eq!(session.session_id(), 99);

        let env = session.encrypt_value(b"secret").unwrap();
        assert_eq!(env.to_bytes().len(), 39 + 6);
        assert_eq!(env.open(&c2p).unwrap(), b"secret");

        let mut back = SessionCipherState::new(p2c, Direction::ProxyToClient);
        let reply = Envelope::seal(&mut back, 99, b"reply").unwrap();
        assert_eq!(session.decrypt_value(&reply).unwrap(), b"reply");
        let foreign = Envelope::seal(&mut back, 98, b"reply").unwrap();
        assert!(matches!(
            session.decrypt_value(&foreign),
            Err(ClientError::WrongSession { expected: 99, got: 98 })
        ));
    }

    #[test]
    fn substituted_public_key_is_a_transcript_mismatch() {
        let proxy = Proxy {
            signer: SimulatedSigner::generate(b"t"),
            measurement: simulated_measurement("blindex-proxy"),
            swap_public: true,
        };
        let hs = Handshake::new().unwrap();
        let (resp, _, _) = proxy.answer(&hs.sql());
        let err = hs.finish(&resp, &expected(), proxy.signer.root()).unwrap_err();
        assert!(matches!(
            err,
            ClientError::Attestation(RejectReason::TranscriptMismatch)
        ));
    }

    #[test]
    fn unexpected_measurement_and_foreign_root_abort() {
        let proxy = Proxy {
            signer: SimulatedSigner::generate(b"t"),
            measurement: simulated_measurement("something-else"),
            swap_public: false,
        };
        let hs = Handshake::new().unwrap();
        let (resp, _, _) = proxy.answer(&hs.sql());
        let err = hs.finish(&resp, &expected(), proxy.signer.root()).unwrap_err();
        assert!(matches!(err, ClientError::Attestation(RejectReason::BadMeasurement)));

        let hs = Handshake::new().unwrap();
        let (resp, _, _) = proxy.answer(&hs.sql());
        let other = SimulatedSigner::generate(b"other");
        let err = hs.finish(&resp, &expected(), other.root()).unwrap_err();
        assert!(matches!(err, ClientError::Attestation(RejectReason::BadChain)));
    }

    #[test]
    fn invalidated_session_refuses_to_encrypt() {
        let proxy = Proxy {
            signer: SimulatedSigner::generate(b"t"),
            measurement: simulated_measurement("blindex-proxy"),
            swap_public: false,
        };
        let hs = Handshake::new().unwrap();
        let (resp, _, _) = proxy.answer(&hs.sql());
        let mut session = hs.finish(&resp, &expected(), proxy.signer.root()).unwrap();
        session.invalidate();
        assert!(matches!(session.encrypt_value(b"x"), Err(ClientError::Unverified)));
        assert_eq!(session.envelopes_sealed(), 0);
    }
}
