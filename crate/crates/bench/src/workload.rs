//! Workload kinds, variants and the driver loop.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use blindex_client::{start_session, ClientSession, HttpClient, QueryOutcome, WireClient};
use blindex_core::attestation::{Certificate, Measurement};
use blindex_core::ErrorCode;
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::dataset::{self, Patient, INDEXED_TABLE, NOINDEX_TABLE, PLAIN_TABLE};
use crate::{json_body_len, Record};

const COLUMNS: &str = "id, doctorOfficeId, name, ssn";
const LOAD_BATCH: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum WorkloadKind {
    /// `LIMIT N` at a random offset, no filter.
    SelectN,
    /// Equality filter on the encrypted SSN, one row back.
    SelectBySsn,
    /// Equality filter on the cleartext id, one row back.
    SelectById,
    /// Single-row INSERT.
    InsertOne,
    /// Same queries as `select_n`; the byte columns are what matter.
    PayloadSize,
    /// `select_n` at a fixed N over datasets with growing name length.
    DatasizeSweep,
}

impl WorkloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SelectN => "select_n",
            Self::SelectBySsn => "select_by_ssn",
            Self::SelectById => "select_by_id",
            Self::InsertOne => "insert_one",
            Self::PayloadSize => "payload_size",
            Self::DatasizeSweep => "datasize_sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Variant {
    /// Straight to the backend, cleartext table.
    CleartextDirect,
    /// Through the proxy, cleartext table (passthrough).
    Cleartext,
    /// Encrypted table with a blind index, client decrypts.
    E2e,
    /// Encrypted table without a blind index.
    E2eNoindex,
    /// Like `e2e` but the client leaves results encrypted.
    E2eNoDecrypt,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CleartextDirect => "cleartext-direct",
            Self::Cleartext => "cleartext",
            Self::E2e => "e2e",
            Self::E2eNoindex => "e2e-noindex",
            Self::E2eNoDecrypt => "e2e-no-decrypt",
        }
    }

    pub fn encrypted(self) -> bool {
        matches!(self, Self::E2e | Self::E2eNoindex | Self::E2eNoDecrypt)
    }

    pub fn table(self) -> &'static str {
        match self {
            Self::CleartextDirect | Self::Cleartext => PLAIN_TABLE,
            Self::E2e | Self::E2eNoDecrypt => INDEXED_TABLE,
            Self::E2eNoindex => NOINDEX_TABLE,
        }
    }
}

/// Where to connect and how to trust the proxy.
#[derive(Clone)]
pub struct Target {
    pub proxy: String,
    pub backend: String,
    /// Proxy HTTP address for `/stats`.
    pub stats: Option<String>,
    pub expected: HashSet<Measurement>,
    /// Pinned attestation root. Only encrypted variants need it.
    pub root: Option<Certificate>,
    pub user: String,
    pub password: String,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub rows: u64,
    pub seed: u64,
    pub reps: u32,
    /// N values for `select_n` and `payload_size`.
    pub n_values: Vec<u64>,
    /// Name lengths for `datasize_sweep`.
    pub datasizes: Vec<usize>,
    /// N used by `datasize_sweep`.
    pub sweep_n: u64,
    pub parallel: usize,
    /// Skip dataset loading and reuse what the backend holds.
    pub skip_load: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            rows: 1000,
            seed: 1,
            reps: 5,
            n_values: vec![1, 10, 100, 1000],
            datasizes: vec![10, 100, 1000],
            sweep_n: 100,
            parallel: 1,
            skip_load: false,
        }
    }
}

/// One client connection, with a logged-in session for encrypted variants.
pub struct Conn {
    pub client: WireClient,
    pub session: Option<ClientSession>,
    variant: Variant,
}

impl Conn {
    pub async fn open(target: &Target, variant: Variant) -> Result<Self> {
        let addr = match variant {
            Variant::CleartextDirect => &target.backend,
            _ => &target.proxy,
        };
        let mut client = WireClient::connect(addr.as_str())
            .await
            .with_context(|| format!("connecting to {addr}"))?;
        let session = if variant.encrypted() {
            let root = target.root.as_ref().context("no attestation root configured")?;
            let mut s = start_session(&mut client, &target.expected, root)
                .await
                .context("key exchange")?;
            match s.register(&mut client, &target.user, &target.password).await {
                Ok(()) => {}
                Err(e) if e.code() == Some(ErrorCode::DuplicateUser) => s
                    .login(&mut client, &target.user, &target.password)
                    .await
                    .context("login")?,
                Err(e) => return Err(e).context("register"),
            }
            Some(s)
        } else {
            None
        };
        Ok(Self {
            client,
            session,
            variant,
        })
    }

    fn session(&mut self) -> &mut ClientSession {
        self.session.as_mut().expect("encrypted variant without a session")
    }

    /// Encrypted literal for encrypted variants, quoted cleartext otherwise.
    pub fn value(&mut self, plain: &str) -> Result<String> {
        if self.variant.encrypted() {
            Ok(self.session().literal(plain)?)
        } else {
            Ok(format!("'{}'", plain.replace('\'', "''")))
        }
    }

    /// `WHERE` clause for `filter`, scoped to the session when the query
    /// carries no envelope of its own.
    fn where_clause(&self, filter: Option<&str>) -> String {
        let scope = self
            .session
            .as_ref()
            .map(|s| format!("SESSION_ID({})", s.session_id()));
        match (filter, scope) {
            (Some(f), Some(s)) => format!(" WHERE {f} AND {s}"),
            (Some(f), None) => format!(" WHERE {f}"),
            (None, Some(s)) => format!(" WHERE {s}"),
            (None, None) => String::new(),
        }
    }

    pub fn insert_sql(&mut self, table: &str, patients: &[Patient]) -> Result<String> {
        let mut sql = format!("INSERT INTO {table} ({COLUMNS}) VALUES ");
        for (i, p) in patients.iter().enumerate() {
            if i > 0 {
                sql.push_str(", ");
            }
            let name = self.value(&p.name)?;
            let ssn = self.value(&p.ssn)?;
            sql.push_str(&format!("({}, {}, {name}, {ssn})", p.id, p.office));
        }
        Ok(sql)
    }
}

/// Drop, create and fill the variant's table.
pub async fn load(target: &Target, variant: Variant, patients: &[Patient], bits: u32) -> Result<()> {
    let mut conn = Conn::open(target, variant).await?;
    let table = variant.table();
    conn.client.query(&format!("DROP TABLE IF EXISTS {table}")).await?;
    conn.client.query(&dataset::create_table_sql(table, bits)).await?;
    for chunk in patients.chunks(LOAD_BATCH) {
        let sql = conn.insert_sql(table, chunk)?;
        let out = conn.client.query(&sql).await.with_context(|| format!("loading {table}"))?;
        ensure!(out.affected == chunk.len() as u64, "short insert into {table}");
    }
    Ok(())
}

struct Stats(Option<HttpClient>);

impl Stats {
    async fn decrypted(&self) -> Result<Option<u64>> {
        match &self.0 {
            None => Ok(None),
            Some(c) => Ok(Some(c.stats().await.context("reading proxy stats")?.rows_decrypted)),
        }
    }
}

struct Measured {
    elapsed: Duration,
    outcome: QueryOutcome,
    bytes_enc: u64,
    bytes_clear: u64,
}

/// Build the statement, run it and decrypt the result. Time covers all
/// three; the byte counts are taken outside the timed region.
async fn measure(
    conn: &mut Conn,
    decrypt: bool,
    build: impl FnOnce(&mut Conn) -> Result<String>,
) -> Result<Measured> {
    let t0 = Instant::now();
    let sql = build(conn)?;
    let raw = conn.client.query(&sql).await?;
    let fetched = t0.elapsed();
    let bytes_enc = json_body_len(&raw);
    let t1 = Instant::now();
    let outcome = match &conn.session {
        Some(s) if decrypt => s.decrypt_outcome(raw)?,
        _ => raw,
    };
    let elapsed = fetched + t1.elapsed();
    let (outcome, bytes_clear) = match &conn.session {
        Some(s) if !decrypt => {
            let clear = s.decrypt_outcome(outcome.clone())?;
            let len = json_body_len(&clear);
            (outcome, len)
        }
        Some(_) => {
            let len = json_body_len(&outcome);
            (outcome, len)
        }
        None => (outcome, bytes_enc),
    };
    Ok(Measured {
        elapsed,
        outcome,
        bytes_enc,
        bytes_clear,
    })
}

fn first_id(outcome: &QueryOutcome) -> Option<u64> {
    outcome.rows.first()?.first()?.as_deref()?.parse().ok()
}

struct Worker {
    target: Arc<Target>,
    variant: Variant,
    kind: WorkloadKind,
    label: String,
    patients: Arc<Vec<Patient>>,
    opts: Arc<RunOptions>,
    index: usize,
}

impl Worker {
    async fn run(self) -> Result<Vec<Record>> {
        let mut conn = Conn::open(&self.target, self.variant).await?;
        let stats = Stats(self.target.stats.as_deref().map(HttpClient::new));
        let mut rng = ChaCha20Rng::seed_from_u64(self.opts.seed ^ (self.index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let rows = self.patients.len() as u64;
        let reps = self.opts.reps;
        let decrypt = self.variant != Variant::E2eNoDecrypt;
        let table = self.variant.table();
        let mut out = Vec::new();

        let ns: Vec<u64> = match self.kind {
            WorkloadKind::SelectN | WorkloadKind::PayloadSize => {
                let mut ns: Vec<u64> = self.opts.n_values.iter().map(|&n| n.min(rows)).collect();
                ns.dedup();
                ns
            }
            WorkloadKind::DatasizeSweep => vec![self.opts.sweep_n.min(rows)],
            _ => vec![rows],
        };

        for &n in &ns {
            for rep in 0..reps {
                let before = stats.decrypted().await?;
                let m = match self.kind {
                    WorkloadKind::SelectN | WorkloadKind::PayloadSize | WorkloadKind::DatasizeSweep => {
                        let offset = rng.gen_range(0..=rows - n);
                        let m = measure(&mut conn, decrypt, |c| {
                            Ok(format!(
                                "SELECT {COLUMNS} FROM {table}{} LIMIT {n} OFFSET {offset}",
                                c.where_clause(None)
                            ))
                        })
                        .await?;
                        ensure!(m.outcome.rows.len() as u64 == n, "expected {n} rows, got {}", m.outcome.rows.len());
                        m
                    }
                    WorkloadKind::SelectBySsn | WorkloadKind::SelectById => {
                        ensure!(rows > 0, "empty dataset");
                        let p = &self.patients[rng.gen_range(0..self.patients.len())];
                        let by_ssn = self.kind == WorkloadKind::SelectBySsn;
                        let m = measure(&mut conn, decrypt, |c| {
                            if by_ssn {
                                // the envelope names the session
                                Ok(format!("SELECT {COLUMNS} FROM {table} WHERE ssn = {}", c.value(&p.ssn)?))
                            } else {
                                Ok(format!("SELECT {COLUMNS} FROM {table}{}", c.where_clause(Some(&format!("id = {}", p.id)))))
                            }
                        })
                        .await?;
                        ensure!(
                            m.outcome.rows.len() == 1 && first_id(&m.outcome) == Some(p.id),
                            "lookup of patient {} returned {} rows",
                            p.id,
                            m.outcome.rows.len()
                        );
                        m
                    }
                    WorkloadKind::InsertOne => {
                        let id = rows + 1 + (self.index as u64) * u64::from(reps) + u64::from(rep);
                        let p = dataset::extra(id, self.opts.seed);
                        let m = measure(&mut conn, decrypt, |c| c.insert_sql(table, std::slice::from_ref(&p))).await?;
                        ensure!(m.outcome.affected == 1, "insert of {id} affected {}", m.outcome.affected);
                        m
                    }
                };
                let after = stats.decrypted().await?;
                out.push(Record {
                    workload: self.label.clone(),
                    variant: self.variant.as_str().to_owned(),
                    rows: n,
                    rep: self.index as u32 * reps + rep,
                    micros: m.elapsed.as_micros() as u64,
                    rows_decrypted: before.zip(after).map(|(b, a)| a.saturating_sub(b)),
                    bytes_clear: m.bytes_clear,
                    bytes_enc: m.bytes_enc,
                });
            }
        }
        if self.kind == WorkloadKind::InsertOne {
            // leave the table as loaded so reruns with skip_load see r rows
            let sql = format!(
                "DELETE FROM {table} WHERE id > {rows}{}",
                conn.where_clause(None).replacen(" WHERE ", " AND ", 1)
            );
            conn.client.query(&sql).await?;
        }
        Ok(out)
    }
}

/// Run one workload under one variant. Loads the dataset first unless
/// `skip_load` is set.
pub async fn run(target: &Target, kind: WorkloadKind, variant: Variant, opts: &RunOptions) -> Result<Vec<Record>> {
    if opts.parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    let target = Arc::new(target.clone());
    let opts_arc = Arc::new(opts.clone());
    let mut records = Vec::new();
    let sizes: Vec<Option<usize>> = match kind {
        WorkloadKind::DatasizeSweep => opts.datasizes.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    for size in sizes {
        let patients = Arc::new(dataset::generate(opts.rows, opts.seed, size));
        if !opts.skip_load {
            load(&target, variant, &patients, dataset::bidx_bits(opts.rows)).await?;
        }
        let label = match size {
            Some(d) => format!("{}@{d}", kind.as_str()),
            None => kind.as_str().to_owned(),
        };
        let tasks: Vec<_> = (0..opts.parallel)
            .map(|index| {
                tokio::spawn(
                    Worker {
                        target: target.clone(),
                        variant,
                        kind,
                        label: label.clone(),
                        patients: patients.clone(),
                        opts: opts_arc.clone(),
                        index,
                    }
                    .run(),
                )
            })
            .collect();
        for t in tasks {
            records.extend(t.await.context("worker panicked")??);
        }
    }
    Ok(records)
}
