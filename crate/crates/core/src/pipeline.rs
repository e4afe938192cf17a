//! Per-row stage between the backend and the client: decrypt stored cells,
//! re-check residual filters on plaintext, re-encrypt for the session, and
//! drop helper columns.
//!
//! [`RowProcessor`] holds no rows; it turns one source row into at most one
//! output row. [`RowStream`] wraps it around a pull-based source so that the
//! first output row is available as soon as the first matching source row is.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;
use zeroize::Zeroizing;

use crate::crypto::{
    column_ad, derive_column_key, value_decrypt, SessionCipherState, StoredCiphertext,
    SymmetricKey,
};
use crate::envelope::Envelope;
use crate::error::{ErrorCode, ProxyError};
use crate::schema::SchemaConfig;
use crate::sql::{QueryPlan, ResidualFilter, Window};
use crate::wire::Row;

#[derive(Debug, Default)]
pub struct PipelineStats {
    pub rows_in: AtomicU64,
    pub rows_out: AtomicU64,
    /// Source rows on which at least one decryption was attempted.
    pub rows_decrypted: AtomicU64,
    pub auth_drops: AtomicU64,
    pub filter_drops: AtomicU64,
    pub window_drops: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct StatsSnapshot {
    pub rows_in: u64,
    pub rows_out: u64,
    pub rows_decrypted: u64,
    pub auth_drops: u64,
    pub filter_drops: u64,
    pub window_drops: u64,
}

impl PipelineStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        StatsSnapshot {
            rows_in: get(&self.rows_in),
            rows_out: get(&self.rows_out),
            rows_decrypted: get(&self.rows_decrypted),
            auth_drops: get(&self.auth_drops),
            filter_drops: get(&self.filter_drops),
            window_drops: get(&self.window_drops),
        }
    }

    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

/// Encrypts outgoing plaintext cells for the client.
pub trait Sealer {
    fn seal(&mut self, plaintext: &[u8]) -> Result<String, ProxyError>;
}

/// Seals under a session's proxy-to-client state.
pub struct SessionSealer<'a> {
    pub state: &'a mut SessionCipherState,
    pub session_id: u64,
}

impl Sealer for SessionSealer<'_> {
    fn seal(&mut self, plaintext: &[u8]) -> Result<String, ProxyError> {
        Ok(Envelope::seal(self.state, self.session_id, plaintext)?.encode())
    }
}

/// For streams whose output never contains encrypted cells.
pub struct NoSealer;

impl Sealer for NoSealer {
    fn seal(&mut self, _: &[u8]) -> Result<String, ProxyError> {
        Err(ProxyError::new(
            ErrorCode::Internal,
            "no session sealer available for encrypted output",
        ))
    }
}

#[derive(Debug)]
pub enum Step {
    Emit(Row),
    /// Row consumed without output.
    Skip,
    /// The window is full; stop pulling.
    Stop,
}

struct DecryptCol {
    index: usize,
    key: SymmetricKey,
    ad: Vec<u8>,
}

enum Cell {
    Keep(usize),
    /// Index into `RowProcessor::decrypt`.
    Reseal(usize),
}

pub struct RowProcessor {
    in_width: usize,
    out_columns: Vec<String>,
    decrypt: Vec<DecryptCol>,
    cells: Vec<Cell>,
    /// (index into `decrypt`, filter)
    residuals: Vec<(usize, ResidualFilter)>,
    window: Window,
    skipped: u64,
    emitted: u64,
    stats: Arc<PipelineStats>,
}

impl RowProcessor {
    /// `columns` is the backend's result header for the plan's statement.
    pub fn new(
        plan: &QueryPlan,
        cfg: &SchemaConfig,
        ltk: Option<&SymmetricKey>,
        columns: &[String],
        stats: Arc<PipelineStats>,
    ) -> Result<Self, ProxyError> {
        let table = plan.table.as_deref().unwrap_or("");
        let augmented_from = columns.len().saturating_sub(plan.augmented_columns.len());
        let mut decrypt: Vec<DecryptCol> = Vec::new();
        let mut need_decrypt = |index: usize, name: &str| -> Result<usize, ProxyError> {
            if let Some(pos) = decrypt.iter().position(|d| d.index == index) {
                return Ok(pos);
            }
            let ltk = ltk.ok_or_else(|| {
                ProxyError::new(ErrorCode::NotLoggedIn, "session has not logged in")
            })?;
            decrypt.push(DecryptCol {
                index,
                key: derive_column_key(ltk, table, name),
                ad: column_ad(table, name),
            });
            Ok(decrypt.len() - 1)
        };

        let mut out_columns = Vec::new();
        let mut cells = Vec::new();
        for (i, name) in columns.iter().enumerate() {
            if i >= augmented_from || cfg.is_companion(table, name) {
                continue;
            }
            out_columns.push(name.clone());
            if cfg.is_encrypted(table, name) {
                cells.push(Cell::Reseal(need_decrypt(i, name)?));
            } else {
                cells.push(Cell::Keep(i));
            }
        }
        let mut residuals = Vec::new();
        for filter in &plan.residual_filters {
            let Some(index) = columns.iter().position(|c| *c == filter.column) else {
                return Err(ProxyError::new(
                    ErrorCode::Internal,
                    format!("filter column {} missing from backend result", filter.column),
                ));
            };
            residuals.push((need_decrypt(index, &filter.column)?, filter.clone()));
        }
        Ok(Self {
            in_width: columns.len(),
            out_columns,
            decrypt,
            cells,
            residuals,
            window: plan.window,
            skipped: 0,
            emitted: 0,
            stats,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.out_columns
    }

    /// True once the window's limit has been reached.
    pub fn is_done(&self) -> bool {
        self.window.limit.is_some_and(|l| self.emitted >= l)
    }

    pub fn process(&mut self, row: Row, sealer: &mut dyn Sealer) -> Result<Step, ProxyError> {
        if self.is_done() {
            return Ok(Step::Stop);
        }
        if row.len() != self.in_width {
            return Err(ProxyError::new(
                ErrorCode::BackendError,
                format!("row has {} cells, header has {}", row.len(), self.in_width),
            ));
        }
        PipelineStats::bump(&self.stats.rows_in);
        if !self.decrypt.is_empty() {
            PipelineStats::bump(&self.stats.rows_decrypted);
        }
        let mut plain: Vec<Option<Zeroizing<Vec<u8>>>> = Vec::with_capacity(self.decrypt.len());
        for d in &self.decrypt {
            let Some(text) = &row[d.index] else {
                plain.push(None);
                continue;
            };
            let opened = StoredCiphertext::from_text(text)
                .and_then(|ct| value_decrypt(&d.key, &ct, &d.ad));
            match opened {
                Ok(pt) => plain.push(Some(Zeroizing::new(pt))),
                Err(_) => {
                    // another user's row, or tampering
                    PipelineStats::bump(&self.stats.auth_drops);
                    return Ok(Step::Skip);
                }
            }
        }
        for (idx, filter) in &self.residuals {
            let ok = plain[*idx].as_ref().is_some_and(|pt| filter.matches(pt));
            if !ok {
                PipelineStats::bump(&self.stats.filter_drops);
                return Ok(Step::Skip);
            }
        }
        if self.skipped < self.window.offset {
            self.skipped += 1;
            PipelineStats::bump(&self.stats.window_drops);
            return Ok(Step::Skip);
        }
        let mut row = row;
        let mut out = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            out.push(match cell {
                Cell::Keep(i) => row[*i].take(),
                Cell::Reseal(d) => match &plain[*d] {
                    Some(pt) => Some(sealer.seal(pt)?),
                    None => None,
                },
            });
        }
        self.emitted += 1;
        PipelineStats::bump(&self.stats.rows_out);
        Ok(Step::Emit(out))
    }
}

/// Pull-based row source.
pub trait RowSource {
    fn next_row(&mut self) -> Result<Option<Row>, ProxyError>;
}

impl<I: Iterator<Item = Row>> RowSource for std::iter::Fuse<I> {
    fn next_row(&mut self) -> Result<Option<Row>, ProxyError> {
        Ok(self.next())
    }
}

impl<S: RowSource + ?Sized> RowSource for &mut S {
    fn next_row(&mut self) -> Result<Option<Row>, ProxyError> {
        (**self).next_row()
    }
}

/// Lazily transformed rows: each call to `next` pulls source rows only
/// until one survives.
pub struct RowStream<'s, S: RowSource> {
    source: S,
    processor: RowProcessor,
    sealer: &'s mut dyn Sealer,
    finished: bool,
}

impl<'s, S: RowSource> RowStream<'s, S> {
    pub fn new(source: S, processor: RowProcessor, sealer: &'s mut dyn Sealer) -> Self {
        Self {
            source,
            processor,
            sealer,
            finished: false,
        }
    }

    pub fn columns(&self) -> &[String] {
        self.processor.columns()
    }

    pub fn into_source(self) -> S {
        self.source
    }
}

impl<S: RowSource> Iterator for RowStream<'_, S> {
    type Item = Result<Row, ProxyError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.finished {
            if self.processor.is_done() {
                self.finished = true;
                break;
            }
            let row = match self.source.next_row() {
                Ok(Some(row)) => row,
                Ok(None) => {
                    self.finished = true;
                    break;
                }
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            };
            match self.processor.process(row, self.sealer) {
                Ok(Step::Emit(out)) => return Some(Ok(out)),
                Ok(Step::Skip) => {}
                Ok(Step::Stop) => self.finished = true,
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}
