use std::sync::Arc;
use std::time::Duration;

pub use blindex_core::attestation::SIMULATED_MEASUREMENT_LABEL;
use blindex_core::attestation::{simulated_measurement, Measurement, ReportSigner, SimulatedSigner};
use blindex_core::crypto::ArgonParams;
use blindex_core::pipeline::PipelineStats;
use blindex_core::schema::SchemaConfig;

use crate::backend::BackendConnector;
use crate::session::{SessionTable, DEFAULT_TTL};

pub fn default_measurement() -> Measurement {
    simulated_measurement(SIMULATED_MEASUREMENT_LABEL)
}

/// Produces attestation reports for key exchanges.
pub struct Attester {
    pub signer: Arc<dyn ReportSigner>,
    pub measurement: Measurement,
}

impl Attester {
    pub fn simulated(signer: SimulatedSigner) -> Self {
        Self {
            signer: Arc::new(signer),
            measurement: default_measurement(),
        }
    }
}

/// State shared by every connection handler.
pub struct ProxyContext {
    pub schema: SchemaConfig,
    pub sessions: SessionTable,
    pub attester: Attester,
    pub argon: ArgonParams,
    pub stats: Arc<PipelineStats>,
    pub backend: Arc<dyn BackendConnector>,
    /// Serializes REGISTER so the duplicate check and insert are atomic.
    pub(crate) user_lock: tokio::sync::Mutex<()>,
}

impl ProxyContext {
    pub fn builder(
        schema: SchemaConfig,
        attester: Attester,
        backend: Arc<dyn BackendConnector>,
    ) -> ProxyContextBuilder {
        ProxyContextBuilder {
            schema,
            attester,
            backend,
            ttl: DEFAULT_TTL,
            argon: ArgonParams::default(),
        }
    }
}

pub struct ProxyContextBuilder {
    schema: SchemaConfig,
    attester: Attester,
    backend: Arc<dyn BackendConnector>,
    ttl: Duration,
    argon: ArgonParams,
}

impl ProxyContextBuilder {
    pub fn session_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn argon_params(mut self, params: ArgonParams) -> Self {
        self.argon = params;
        self
    }

    pub fn build(self) -> Arc<ProxyContext> {
        Arc::new(ProxyContext {
            schema: self.schema,
            sessions: SessionTable::new(self.ttl),
            attester: self.attester,
            argon: self.argon,
            stats: Arc::new(PipelineStats::default()),
            backend: self.backend,
            user_lock: tokio::sync::Mutex::new(()),
        })
    }
}
