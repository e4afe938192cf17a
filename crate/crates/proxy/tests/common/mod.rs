#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use blindex_client::{start_session, ClientSession, WireClient};
use blindex_core::attestation::{Certificate, Measurement, SimulatedSigner};
use blindex_core::crypto::ArgonParams;
use blindex_core::schema::load_config;
use blindex_proxy::backend::BackendConnector;
use blindex_proxy::{default_measurement, start_proxy, Attester, ProxyContext, ReferenceDb, RunningProxy};

pub const PATIENT_SCHEMA: &str = r#"
[patients]
encrypted = ["name", "ssn"]
blind_index.ssn.bits = 13
"#;

pub const PATIENT_TABLE: &str = "CREATE TABLE patients (id INT PRIMARY KEY, doctorOfficeId INT, name TEXT, ssn TEXT, ssn__bidx VARCHAR(4))";

pub struct Harness {
    pub db: ReferenceDb,
    pub proxy: RunningProxy,
    pub root: Certificate,
    pub expected: HashSet<Measurement>,
}

pub struct Options {
    pub schema: &'static str,
    pub ttl: Duration,
    pub http: bool,
    pub backend: Option<Arc<dyn BackendConnector>>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            schema: PATIENT_SCHEMA,
            ttl: Duration::from_secs(3600),
            http: false,
            backend: None,
        }
    }
}

impl Harness {
    pub async fn start() -> Self {
        Self::with(Options::default()).await
    }

    pub async fn with(opts: Options) -> Self {
        let db = ReferenceDb::new();
        let signer = SimulatedSigner::generate(b"proxy integration tests");
        let root = signer.root().clone();
        let backend = opts.backend.unwrap_or_else(|| db.connector());
        let ctx = ProxyContext::builder(
            load_config(opts.schema).unwrap(),
            Attester::simulated(signer),
            backend,
        )
        .session_ttl(opts.ttl)
        .argon_params(ArgonParams::MINIMAL)
        .build();
        let http = opts.http.then_some("127.0.0.1:0");
        let proxy = start_proxy(ctx, "127.0.0.1:0", http).await.unwrap();
        Self {
            db,
            proxy,
            root,
            expected: HashSet::from([default_measurement()]),
        }
    }

    pub async fn client(&self) -> WireClient {
        WireClient::connect(self.proxy.addr).await.unwrap()
    }

    pub async fn session(&self, client: &mut WireClient) -> ClientSession {
        start_session(client, &self.expected, &self.root).await.unwrap()
    }

    /// Connection plus a session registered (and so logged in) as `user`.
    pub async fn user(&self, user: &str, password: &str) -> (WireClient, ClientSession) {
        let mut client = self.client().await;
        let mut session = self.session(&mut client).await;
        session.register(&mut client, user, password).await.unwrap();
        (client, session)
    }

    pub async fn create_patients(&self) {
        let mut c = self.client().await;
        c.query(PATIENT_TABLE).await.unwrap();
    }
}

pub fn insert_patient(s: &mut ClientSession, id: u32, office: u32, name: &str, ssn: &str) -> String {
    format!(
        "INSERT INTO patients (id, doctorOfficeId, name, ssn) VALUES ({id}, {office}, {}, {})",
        s.literal(name).unwrap(),
        s.literal(ssn).unwrap(),
    )
}
