//! In-memory reference database speaking the same SQL subset as the proxy
//! plus `CREATE TABLE` / `DROP TABLE`.
//!
//! Columns have integer or text affinity, picked from the declared type.
//! String comparison is binary (case-sensitive). One transaction may be
//! open at a time across all connections; statements outside a transaction
//! wait for it. Result sets are produced lazily, one row per pull.

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use blindex_core::sql::{
    parse, AggregateFunc, CompareOp, CreateTable, Delete, Insert, Literal, Projection, Select,
    SelectItem, Statement, Term, TxnControl, Update,
};
use blindex_core::wire::Row;
use blindex_core::{ErrorCode, ProxyError};
use parking_lot::Mutex;
use tokio::sync::OwnedMutexGuard;

use crate::backend::{BackendConnection, BackendConnector, Exec};

fn db_error(msg: impl Into<String>) -> ProxyError {
    ProxyError::new(ErrorCode::BackendError, msg)
}

#[derive(Debug, Clone)]
struct Column {
    name: String,
    int: bool,
}

#[derive(Debug, Clone)]
struct Table {
    columns: Vec<Column>,
    pk: Option<usize>,
    pk_index: HashMap<Literal, u64>,
    rows: BTreeMap<u64, Vec<Literal>>,
    next_rowid: u64,
}

impl Table {
    fn column(&self, name: &str) -> Result<usize, ProxyError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| db_error(format!("unknown column {name}")))
    }

    fn coerce(&self, col: usize, value: &Literal) -> Result<Literal, ProxyError> {
        let column = &self.columns[col];
        Ok(match (column.int, value) {
            (_, Literal::Null) => Literal::Null,
            (true, Literal::Int(i)) => Literal::Int(*i),
            (true, Literal::Str(s)) => match s.trim().parse::<i64>() {
                Ok(i) => Literal::Int(i),
                Err(_) => {
                    return Err(db_error(format!(
                        "incorrect integer value for column {}",
                        column.name
                    )))
                }
            },
            (false, Literal::Int(i)) => Literal::Str(i.to_string()),
            (false, Literal::Str(s)) => Literal::Str(s.clone()),
        })
    }

    fn insert_row(&mut self, row: Vec<Literal>) -> Result<u64, ProxyError> {
        if let Some(pk) = self.pk {
            let key = &row[pk];
            if *key == Literal::Null {
                return Err(db_error(format!(
                    "column {} cannot be NULL",
                    self.columns[pk].name
                )));
            }
            if self.pk_index.contains_key(key) {
                return Err(db_error(format!(
                    "duplicate entry for key {}",
                    self.columns[pk].name
                )));
            }
        }
        let rowid = self.next_rowid;
        self.next_rowid += 1;
        self.restore(rowid, row);
        Ok(rowid)
    }

    /// Puts a row back under its id without checks.
    fn restore(&mut self, rowid: u64, row: Vec<Literal>) {
        if let Some(pk) = self.pk {
            self.pk_index.insert(row[pk].clone(), rowid);
        }
        self.rows.insert(rowid, row);
    }

    fn remove(&mut self, rowid: u64) -> Option<Vec<Literal>> {
        let row = self.rows.remove(&rowid)?;
        if let Some(pk) = self.pk {
            self.pk_index.remove(&row[pk]);
        }
        Some(row)
    }
}

#[derive(Debug, Default)]
struct Database {
    tables: BTreeMap<String, Table>,
}

impl Database {
    fn table(&self, name: &str) -> Result<&Table, ProxyError> {
        self.tables
            .get(name)
            .ok_or_else(|| db_error(format!("table {name} doesn't exist")))
    }

    fn table_mut(&mut self, name: &str) -> Result<&mut Table, ProxyError> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| db_error(format!("table {name} doesn't exist")))
    }
}

enum Undo {
    Insert { table: String, rowid: u64 },
    Restore { table: String, rowid: u64, row: Vec<Literal> },
    Create { table: String },
    Drop { table: String, old: Table },
}

fn apply_undo(db: &mut Database, undo: Vec<Undo>) {
    for step in undo.into_iter().rev() {
        match step {
            Undo::Insert { table, rowid } => {
                if let Some(t) = db.tables.get_mut(&table) {
                    t.remove(rowid);
                }
            }
            Undo::Restore { table, rowid, row } => {
                if let Some(t) = db.tables.get_mut(&table) {
                    t.remove(rowid);
                    t.restore(rowid, row);
                }
            }
            Undo::Create { table } => {
                db.tables.remove(&table);
            }
            Undo::Drop { table, old } => {
                db.tables.insert(table, old);
            }
        }
    }
}

struct Shared {
    data: Mutex<Database>,
    txn: Arc<tokio::sync::Mutex<()>>,
    log: Mutex<Vec<String>>,
    rows_served: AtomicU64,
}

/// Handle to one in-memory database; clones share state.
#[derive(Clone)]
pub struct ReferenceDb {
    shared: Arc<Shared>,
}

impl Default for ReferenceDb {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceDb {
    pub fn new() -> Self {
        Self {
            shared: Arc::new(Shared {
                data: Mutex::new(Database::default()),
                txn: Arc::new(tokio::sync::Mutex::new(())),
                log: Mutex::new(Vec::new()),
                rows_served: AtomicU64::new(0),
            }),
        }
    }

    pub fn connect(&self) -> LocalConnection {
        LocalConnection {
            db: self.clone(),
            txn: None,
            cursor: None,
            last_affected: 0,
        }
    }

    pub fn connector(&self) -> Arc<dyn BackendConnector> {
        Arc::new(LocalConnector { db: self.clone() })
    }

    /// Every statement received, in arrival order. Transaction messages
    /// appear as `BEGIN`, `COMMIT` and `ROLLBACK`.
    pub fn query_log(&self) -> Vec<String> {
        self.shared.log.lock().clone()
    }

    pub fn clear_log(&self) {
        self.shared.log.lock().clear();
    }

    /// Rows handed out by result cursors since creation.
    pub fn rows_served(&self) -> u64 {
        self.shared.rows_served.load(Ordering::Relaxed)
    }

    pub fn table_names(&self) -> Vec<String> {
        self.shared.data.lock().tables.keys().cloned().collect()
    }

    /// Header and rows of a table in insertion order.
    pub fn table_rows(&self, name: &str) -> Option<(Vec<String>, Vec<Row>)> {
        let data = self.shared.data.lock();
        let t = data.tables.get(name)?;
        Some((
            t.columns.iter().map(|c| c.name.clone()).collect(),
            t.rows
                .values()
                .map(|r| r.iter().map(Literal::to_cell).collect())
                .collect(),
        ))
    }

    /// Text rendering of every stored byte: table names, column names and
    /// cell values.
    pub fn storage_dump(&self) -> String {
        let data = self.shared.data.lock();
        let mut out = String::new();
        for (name, t) in &data.tables {
            let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
            let _ = writeln!(out, "table {name} ({})", cols.join(", "));
            for row in t.rows.values() {
                for cell in row {
                    match cell {
                        Literal::Null => out.push_str("NULL"),
                        Literal::Int(i) => {
                            let _ = write!(out, "{i}");
                        }
                        Literal::Str(s) => out.push_str(s),
                    }
                    out.push('\t');
                }
                out.push('\n');
            }
        }
        out
    }

    fn log(&self, entry: &str) {
        self.shared.log.lock().push(entry.to_owned());
    }
}

struct LocalConnector {
    db: ReferenceDb,
}

#[async_trait]
impl BackendConnector for LocalConnector {
    async fn connect(&self) -> Result<Box<dyn BackendConnection>, ProxyError> {
        Ok(Box::new(self.db.connect()))
    }
}

struct Txn {
    _guard: OwnedMutexGuard<()>,
    undo: Vec<Undo>,
}

enum Out {
    Col(usize),
    Const(Option<String>),
}

enum Pred {
    Cmp(usize, CompareOp, Literal),
    In(usize, Vec<Literal>),
}

struct Scan {
    table: String,
    out: Vec<Out>,
    preds: Vec<Pred>,
    /// Candidate row ids from the primary-key index, when usable.
    keys: Option<VecDeque<u64>>,
    next: u64,
    offset_left: u64,
    limit_left: Option<u64>,
    emitted: u64,
}

enum Cursor {
    Buffered(VecDeque<Row>, u64),
    Scan(Scan),
}

/// One client's session with the reference database.
pub struct LocalConnection {
    db: ReferenceDb,
    txn: Option<Txn>,
    cursor: Option<Cursor>,
    last_affected: u64,
}

impl Drop for LocalConnection {
    fn drop(&mut self) {
        if let Some(txn) = self.txn.take() {
            apply_undo(&mut self.db.shared.data.lock(), txn.undo);
        }
    }
}

fn compare(cell: &Literal, lit: &Literal) -> Option<CmpOrdering> {
    match (cell, lit) {
        (Literal::Null, _) | (_, Literal::Null) => None,
        (Literal::Int(a), Literal::Int(b)) => Some(a.cmp(b)),
        (Literal::Str(a), Literal::Str(b)) => Some(a.as_str().cmp(b.as_str())),
        (Literal::Int(a), Literal::Str(b)) => b.trim().parse::<i64>().ok().map(|b| a.cmp(&b)),
        (Literal::Str(a), Literal::Int(b)) => a.trim().parse::<i64>().ok().map(|a| a.cmp(b)),
    }
}

/// SQL LIKE with `%`, `_` and backslash escapes.
fn like(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let mut p = Vec::new();
    let mut chars = pattern.chars();
    // (char, is_wildcard)
    while let Some(c) = chars.next() {
        match c {
            '\\' => p.push((chars.next().unwrap_or('\\'), false)),
            '%' | '_' => p.push((c, true)),
            _ => p.push((c, false)),
        }
    }
    let (mut ti, mut pi) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == ('_', true) || (!p[pi].1 && p[pi].0 == t[ti])) {
            ti += 1;
            pi += 1;
        } else if pi < p.len() && p[pi] == ('%', true) {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == ('%', true) {
        pi += 1;
    }
    pi == p.len()
}

fn eval(pred: &Pred, row: &[Literal]) -> bool {
    match pred {
        Pred::Cmp(col, op, lit) => {
            let cell = &row[*col];
            if *op == CompareOp::Like {
                return match (cell.to_cell(), lit.to_cell()) {
                    (Some(t), Some(p)) => like(&t, &p),
                    _ => false,
                };
            }
            let Some(ord) = compare(cell, lit) else {
                return false;
            };
            match op {
                CompareOp::Eq => ord.is_eq(),
                CompareOp::NotEq => ord.is_ne(),
                CompareOp::Lt => ord.is_lt(),
                CompareOp::LtEq => ord.is_le(),
                CompareOp::Gt => ord.is_gt(),
                CompareOp::GtEq => ord.is_ge(),
                CompareOp::Like => unreachable!(),
            }
        }
        Pred::In(col, values) => values
            .iter()
            .any(|v| compare(&row[*col], v).is_some_and(CmpOrdering::is_eq)),
    }
}

fn resolve_filter(table: &Table, filter: &[Term]) -> Result<Vec<Pred>, ProxyError> {
    filter
        .iter()
        .map(|term| match term {
            Term::Compare { column, op, value } => {
                Ok(Pred::Cmp(table.column(column)?, *op, value.clone()))
            }
            Term::In { column, values } => Ok(Pred::In(table.column(column)?, values.clone())),
            Term::SessionId(_) => Err(ProxyError::new(
                ErrorCode::SyntaxError,
                "FUNCTION SESSION_ID does not exist",
            )),
        })
        .collect()
}

/// Row ids worth visiting: a primary-key equality narrows to at most one.
fn pk_candidates(table: &Table, preds: &[Pred]) -> Option<VecDeque<u64>> {
    let pk = table.pk?;
    preds.iter().find_map(|p| match p {
        Pred::Cmp(col, CompareOp::Eq, lit) if *col == pk => {
            let key = table.coerce(pk, lit).ok()?;
            Some(table.pk_index.get(&key).copied().into_iter().collect())
        }
        _ => None,
    })
}

fn matching_ids(table: &Table, preds: &[Pred]) -> Vec<u64> {
    let matches = |row: &Vec<Literal>| preds.iter().all(|p| eval(p, row));
    match pk_candidates(table, preds) {
        Some(ids) => ids
            .into_iter()
            .filter(|id| table.rows.get(id).is_some_and(matches))
            .collect(),
        None => table
            .rows
            .iter()
            .filter(|(_, row)| matches(row))
            .map(|(id, _)| *id)
            .collect(),
    }
}

fn aggregate(
    table: &Table,
    func: AggregateFunc,
    arg: Option<&str>,
    ids: &[u64],
) -> Result<Option<String>, ProxyError> {
    let col = arg.map(|a| table.column(a)).transpose()?;
    let values: Vec<&Literal> = match col {
        None => {
            return match func {
                AggregateFunc::Count => Ok(Some(ids.len().to_string())),
                _ => Err(ProxyError::new(
                    ErrorCode::SyntaxError,
                    format!("{}(*) is not valid", func.name()),
                )),
            }
        }
        Some(c) => ids
            .iter()
            .map(|id| &table.rows[id][c])
            .filter(|v| **v != Literal::Null)
            .collect(),
    };
    if func == AggregateFunc::Count {
        return Ok(Some(values.len().to_string()));
    }
    if values.is_empty() {
        return Ok(None);
    }
    Ok(Some(match func {
        AggregateFunc::Min | AggregateFunc::Max => {
            let pick = values
                .iter()
                .copied()
                .reduce(|a, b| {
                    let ord = match (a, b) {
                        (Literal::Int(x), Literal::Int(y)) => x.cmp(y),
                        _ => a.to_cell().cmp(&b.to_cell()),
                    };
                    let keep_a = if func == AggregateFunc::Min {
                        ord.is_le()
                    } else {
                        ord.is_ge()
                    };
                    if keep_a {
                        a
                    } else {
                        b
                    }
                })
                .expect("non-empty");
            pick.to_cell().expect("not null")
        }
        AggregateFunc::Sum | AggregateFunc::Avg => {
            let mut sum: i128 = 0;
            for v in &values {
                sum += match v {
                    Literal::Int(i) => *i as i128,
                    Literal::Str(s) => s.trim().parse::<i64>().unwrap_or(0) as i128,
                    Literal::Null => 0,
                };
            }
            if func == AggregateFunc::Sum {
                sum.to_string()
            } else {
                format!("{:.4}", sum as f64 / values.len() as f64)
            }
        }
        AggregateFunc::Count => unreachable!(),
    }))
}

fn window(rows: Vec<Row>, offset: Option<u64>, limit: Option<u64>) -> VecDeque<Row> {
    rows.into_iter()
        .skip(offset.unwrap_or(0) as usize)
        .take(limit.map_or(usize::MAX, |l| l as usize))
        .collect()
}

impl LocalConnection {
    pub fn in_transaction(&self) -> bool {
        self.txn.is_some()
    }

    /// Holds the global transaction lock for one statement unless this
    /// connection already owns it.
    async fn statement_guard(&self) -> Option<OwnedMutexGuard<()>> {
        match self.txn {
            Some(_) => None,
            None => Some(self.db.shared.txn.clone().lock_owned().await),
        }
    }

    fn undo_log(&mut self) -> Option<&mut Vec<Undo>> {
        self.txn.as_mut().map(|t| &mut t.undo)
    }

    async fn begin_txn(&mut self) -> Result<(), ProxyError> {
        if self.txn.is_some() {
            return Err(db_error("a transaction is already open"));
        }
        let guard = self.db.shared.txn.clone().lock_owned().await;
        self.txn = Some(Txn {
            _guard: guard,
            undo: Vec::new(),
        });
        Ok(())
    }

    fn end_txn(&mut self, commit: bool) -> Result<(), ProxyError> {
        let Some(txn) = self.txn.take() else {
            return Err(db_error("no transaction is open"));
        };
        if !commit {
            apply_undo(&mut self.db.shared.data.lock(), txn.undo);
        }
        Ok(())
    }

    fn select(&mut self, s: Select) -> Result<Exec, ProxyError> {
        let data = self.db.shared.data.lock();
        let has_aggregate = s.has_aggregate();
        let Some(from) = s.from else {
            let items = match s.projection {
                Projection::Star => return Err(db_error("SELECT * requires FROM")),
                Projection::Items(items) => items,
            };
            let mut names = Vec::new();
            let mut row = Vec::new();
            for item in &items {
                match item {
                    SelectItem::Literal(l) => row.push(l.to_cell()),
                    _ => return Err(db_error("column reference without FROM")),
                }
                names.push(item.output_name());
            }
            if !s.filter.is_empty() {
                return Err(db_error("WHERE without FROM"));
            }
            let rows = window(vec![row], s.offset, s.limit);
            let n = rows.len() as u64;
            self.cursor = Some(Cursor::Buffered(rows, n));
            return Ok(Exec::Rows(names));
        };
        let table = data.table(&from)?;
        let preds = resolve_filter(table, &s.filter)?;
        let (names, out) = match &s.projection {
            Projection::Star => (
                table.columns.iter().map(|c| c.name.clone()).collect(),
                (0..table.columns.len()).map(Out::Col).collect(),
            ),
            Projection::Items(items) if has_aggregate => {
                let ids = matching_ids(table, &preds);
                let mut names = Vec::new();
                let mut row = Vec::new();
                for item in items {
                    names.push(item.output_name());
                    row.push(match item {
                        SelectItem::Aggregate { func, arg } => {
                            aggregate(table, *func, arg.as_deref(), &ids)?
                        }
                        SelectItem::Literal(l) => l.to_cell(),
                        SelectItem::Column(_) => {
                            return Err(ProxyError::new(
                                ErrorCode::UnsupportedStatement,
                                "mixing aggregates and columns requires GROUP BY",
                            ))
                        }
                    });
                }
                let rows = window(vec![row], s.offset, s.limit);
                let n = rows.len() as u64;
                self.cursor = Some(Cursor::Buffered(rows, n));
                return Ok(Exec::Rows(names));
            }
            Projection::Items(items) => {
                let mut names = Vec::new();
                let mut out = Vec::new();
                for item in items {
                    names.push(item.output_name());
                    out.push(match item {
                        SelectItem::Column(c) => Out::Col(table.column(c)?),
                        SelectItem::Literal(l) => Out::Const(l.to_cell()),
                        SelectItem::Aggregate { .. } => unreachable!("handled above"),
                    });
                }
                (names, out)
            }
        };
        let keys = pk_candidates(table, &preds);
        self.cursor = Some(Cursor::Scan(Scan {
            table: from,
            out,
            preds,
            keys,
            next: 0,
            offset_left: s.offset.unwrap_or(0),
            limit_left: s.limit,
            emitted: 0,
        }));
        Ok(Exec::Rows(names))
    }

    fn insert(&mut self, ins: Insert) -> Result<Exec, ProxyError> {
        let db = self.db.clone();
        let mut data = db.shared.data.lock();
        let table = data.table_mut(&ins.table)?;
        let positions: Vec<usize> = match &ins.columns {
            Some(cols) => cols
                .iter()
                .map(|c| table.column(c))
                .collect::<Result<_, _>>()?,
            None => (0..table.columns.len()).collect(),
        };
        let mut staged = Vec::with_capacity(ins.rows.len());
        for values in &ins.rows {
            if values.len() != positions.len() {
                return Err(db_error("column count doesn't match value count"));
            }
            let mut row = vec![Literal::Null; table.columns.len()];
            for (pos, v) in positions.iter().zip(values) {
                row[*pos] = table.coerce(*pos, v)?;
            }
            staged.push(row);
        }
        let mut inserted = Vec::new();
        for row in staged {
            match table.insert_row(row) {
                Ok(id) => inserted.push(id),
                Err(e) => {
                    // statement is atomic
                    for id in inserted {
                        table.remove(id);
                    }
                    return Err(e);
                }
            }
        }
        let n = inserted.len() as u64;
        if let Some(undo) = self.undo_log() {
            undo.extend(inserted.into_iter().map(|rowid| Undo::Insert {
                table: ins.table.clone(),
                rowid,
            }));
        }
        Ok(Exec::Done(n))
    }

    fn update(&mut self, u: Update) -> Result<Exec, ProxyError> {
        let db = self.db.clone();
        let mut data = db.shared.data.lock();
        let table = data.table_mut(&u.table)?;
        let preds = resolve_filter(table, &u.filter)?;
        let sets: Vec<(usize, Literal)> = u
            .assignments
            .iter()
            .map(|a| {
                let col = table.column(&a.column)?;
                Ok((col, table.coerce(col, &a.value)?))
            })
            .collect::<Result<_, ProxyError>>()?;
        let ids = matching_ids(table, &preds);
        let mut old_rows = Vec::with_capacity(ids.len());
        for id in &ids {
            old_rows.push((*id, table.remove(*id).expect("matched row exists")));
        }
        let mut failure = None;
        let mut written = Vec::new();
        for (id, old) in &old_rows {
            let mut row = old.clone();
            for (col, v) in &sets {
                row[*col] = v.clone();
            }
            if let Some(pk) = table.pk {
                if row[pk] == Literal::Null || table.pk_index.contains_key(&row[pk]) {
                    failure = Some(db_error(format!(
                        "duplicate or NULL entry for key {}",
                        table.columns[pk].name
                    )));
                    break;
                }
            }
            table.restore(*id, row);
            written.push(*id);
        }
        if let Some(err) = failure {
            for id in written {
                table.remove(id);
            }
            for (id, old) in old_rows {
                table.restore(id, old);
            }
            return Err(err);
        }
        let n = old_rows.len() as u64;
        if let Some(undo) = self.undo_log() {
            undo.extend(old_rows.into_iter().map(|(rowid, row)| Undo::Restore {
                table: u.table.clone(),
                rowid,
                row,
            }));
        }
        Ok(Exec::Done(n))
    }

    fn delete(&mut self, d: Delete) -> Result<Exec, ProxyError> {
        let db = self.db.clone();
        let mut data = db.shared.data.lock();
        let table = data.table_mut(&d.table)?;
        let preds = resolve_filter(table, &d.filter)?;
        let ids = matching_ids(table, &preds);
        let removed: Vec<(u64, Vec<Literal>)> = ids
            .into_iter()
            .filter_map(|id| table.remove(id).map(|r| (id, r)))
            .collect();
        let n = removed.len() as u64;
        if let Some(undo) = self.undo_log() {
            undo.extend(removed.into_iter().map(|(rowid, row)| Undo::Restore {
                table: d.table.clone(),
                rowid,
                row,
            }));
        }
        Ok(Exec::Done(n))
    }

    fn create(&mut self, c: CreateTable) -> Result<Exec, ProxyError> {
        let db = self.db.clone();
        let mut data = db.shared.data.lock();
        if data.tables.contains_key(&c.name) {
            if c.if_not_exists {
                return Ok(Exec::Done(0));
            }
            return Err(db_error(format!("table {} already exists", c.name)));
        }
        let mut columns = Vec::new();
        let mut pk = None;
        for (i, def) in c.columns.iter().enumerate() {
            if columns.iter().any(|c: &Column| c.name == def.name) {
                return Err(db_error(format!("duplicate column {}", def.name)));
            }
            let ty = def.ty.to_ascii_uppercase();
            let base = ty.split(|ch: char| !ch.is_ascii_alphanumeric()).next().unwrap_or("");
            let int = matches!(
                base,
                "INT" | "INTEGER" | "BIGINT" | "SMALLINT" | "TINYINT" | "MEDIUMINT"
            );
            if ty.contains("PRIMARY KEY") {
                if pk.is_some() {
                    return Err(db_error("multiple primary keys defined"));
                }
                pk = Some(i);
            }
            columns.push(Column {
                name: def.name.clone(),
                int,
            });
        }
        data.tables.insert(
            c.name.clone(),
            Table {
                columns,
                pk,
                pk_index: HashMap::new(),
                rows: BTreeMap::new(),
                next_rowid: 1,
            },
        );
        if let Some(undo) = self.undo_log() {
            undo.push(Undo::Create { table: c.name });
        }
        Ok(Exec::Done(0))
    }

    fn drop_table(&mut self, name: String, if_exists: bool) -> Result<Exec, ProxyError> {
        let db = self.db.clone();
        let mut data = db.shared.data.lock();
        match data.tables.remove(&name) {
            Some(old) => {
                if let Some(undo) = self.undo_log() {
                    undo.push(Undo::Drop { table: name, old });
                }
                Ok(Exec::Done(0))
            }
            None if if_exists => Ok(Exec::Done(0)),
            None => Err(db_error(format!("table {name} doesn't exist"))),
        }
    }

    fn pull(&mut self) -> Result<Option<Row>, ProxyError> {
        let Some(cursor) = self.cursor.as_mut() else {
            return Ok(None);
        };
        let row = match cursor {
            Cursor::Buffered(rows, n) => match rows.pop_front() {
                Some(r) => Some(r),
                None => {
                    self.last_affected = *n;
                    None
                }
            },
            Cursor::Scan(scan) => {
                let data = self.db.shared.data.lock();
                let found = match data.tables.get(&scan.table) {
                    None => None,
                    Some(table) => loop {
                        if scan.limit_left == Some(0) {
                            break None;
                        }
                        let next = match &mut scan.keys {
                            Some(keys) => match keys.pop_front() {
                                Some(id) => table.rows.get(&id).map(|r| (id, r)),
                                None => None,
                            },
                            None => table.rows.range(scan.next..).next().map(|(k, r)| (*k, r)),
                        };
                        let Some((id, row)) = next else {
                            break None;
                        };
                        scan.next = id + 1;
                        if !scan.preds.iter().all(|p| eval(p, row)) {
                            continue;
                        }
                        if scan.offset_left > 0 {
                            scan.offset_left -= 1;
                            continue;
                        }
                        if let Some(l) = &mut scan.limit_left {
                            *l -= 1;
                        }
                        break Some(
                            scan.out
                                .iter()
                                .map(|o| match o {
                                    Out::Col(i) => row[*i].to_cell(),
                                    Out::Const(c) => c.clone(),
                                })
                                .collect::<Row>(),
                        );
                    },
                };
                if found.is_some() {
                    scan.emitted += 1;
                } else {
                    self.last_affected = scan.emitted;
                }
                found
            }
        };
        match &row {
            Some(_) => {
                self.db.shared.rows_served.fetch_add(1, Ordering::Relaxed);
            }
            None => self.cursor = None,
        }
        Ok(row)
    }
}

#[async_trait]
impl BackendConnection for LocalConnection {
    async fn execute(&mut self, sql: &str) -> Result<Exec, ProxyError> {
        self.db.log(sql);
        self.cursor = None;
        let stmt = parse(sql)?;
        if let Statement::Transaction(c) = stmt {
            match c {
                TxnControl::Begin => self.begin_txn().await?,
                TxnControl::Commit => self.end_txn(true)?,
                TxnControl::Rollback => self.end_txn(false)?,
            }
            self.last_affected = 0;
            return Ok(Exec::Done(0));
        }
        let _guard = self.statement_guard().await;
        let result = match stmt {
            Statement::Select(s) => self.select(s),
            Statement::Insert(i) => self.insert(i),
            Statement::Update(u) => self.update(u),
            Statement::Delete(d) => self.delete(d),
            Statement::CreateTable(c) => self.create(c),
            Statement::DropTable { name, if_exists } => self.drop_table(name, if_exists),
            Statement::Call(p) => Err(ProxyError::new(
                ErrorCode::SyntaxError,
                format!("FUNCTION {} does not exist", p.name()),
            )),
            Statement::Other { .. } => Err(ProxyError::new(
                ErrorCode::UnsupportedStatement,
                "statement not supported by the reference database",
            )),
            Statement::Transaction(_) => unreachable!(),
        }?;
        if let Exec::Done(n) = result {
            self.last_affected = n;
        }
        Ok(result)
    }

    async fn next_row(&mut self) -> Result<Option<Row>, ProxyError> {
        if self.cursor.is_none() {
            return Ok(None);
        }
        let _guard = self.statement_guard().await;
        self.pull()
    }

    fn last_affected(&self) -> u64 {
        self.last_affected
    }

    async fn discard(&mut self) -> Result<(), ProxyError> {
        self.cursor = None;
        Ok(())
    }

    async fn begin(&mut self) -> Result<(), ProxyError> {
        self.db.log("BEGIN");
        self.cursor = None;
        self.begin_txn().await
    }

    async fn commit(&mut self) -> Result<(), ProxyError> {
        self.db.log("COMMIT");
        self.cursor = None;
        self.end_txn(true)
    }

    async fn rollback(&mut self) -> Result<(), ProxyError> {
        self.db.log("ROLLBACK");
        self.cursor = None;
        self.end_txn(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    async fn run(conn: &mut LocalConnection, sql: &str) -> Vec<Row> {
        conn.query_all(sql).await.unwrap_or_else(|e| panic!("{sql}: {e}")).1
    }

    fn cells(rows: &[Row]) -> Vec<Vec<&str>> {
        rows.iter()
            .map(|r| r.iter().map(|c| c.as_deref().unwrap_or("NULL")).collect())
            .collect()
    }

    #[test]
    fn like_patterns() {
        assert!(like("Johnson", "Jo%"));
        assert!(like("Johnson", "%son"));
        assert!(like("Johnson", "J_hn%n"));
        assert!(!like("Johnson", "jo%"));
        assert!(like("50%", "50\\%"));
        assert!(!like("500", "50\\%"));
        assert!(like("", "%"));
        assert!(!like("a", ""));
    }

    #[tokio::test]
    async fn insert_then_select_round_trip() {
        let db = ReferenceDb::new();
        let mut c = db.connect();
        run(&mut c, "CREATE TABLE t (id INT PRIMARY KEY, name TEXT, tag VARCHAR(8))").await;
        let (_, rows) = c.query_all("INSERT INTO t (id, name) VALUES (1, 'a'), (2, 'b')").await.unwrap();
        assert!(rows.is_empty());
        assert_eq!(c.last_affected(), 2);
        let rows = run(&mut c, "SELECT * FROM t").await;
        assert_eq!(cells(&rows), vec![vec!["1", "a", "NULL"], vec!["2", "b", "NULL"]]);
        let rows = run(&mut c, "SELECT name, 7 FROM t WHERE id = '2'").await;
        assert_eq!(cells(&rows), vec![vec!["b", "7"]]);
        assert_eq!(c.last_affected(), 1);
        let err = c.execute("INSERT INTO t (id) VALUES (1)").await.unwrap_err();
        assert_eq!(err.code, ErrorCode::BackendError);
    }

    #[tokio::test]
    async fn hex_bidx_equality_and_paging() {
        let db = ReferenceDb::new();
        let mut c = db.connect();
        run(&mut c, "CREATE TABLE p (id INT PRIMARY KEY, ssn__bidx VARCHAR(4))").await;
        for i in 0..20 {
            let b = if i % 5 == 0 { "0392" } else { "1fff" };
            run(&mut c, &format!("INSERT INTO p (id, ssn__bidx) VALUES ({i}, '{b}')")).await;
        }
        let rows = run(&mut c, "SELECT id FROM p WHERE ssn__bidx = '0392'").await;
        assert_eq!(cells(&rows), vec![vec!["0"], vec!["5"], vec!["10"], vec!["15"]]);
        let rows = run(&mut c, "SELECT id FROM p LIMIT 3 OFFSET 4").await;
        assert_eq!(cells(&rows), vec![vec!["4"], vec!["5"], vec!["6"]]);
        let rows = run(&mut c, "SELECT id FROM p LIMIT 18, 5").await;
        assert_eq!(cells(&rows), vec![vec!["18"], vec!["19"]]);
        let rows = run(&mut c, "SELECT COUNT(*), MIN(id), MAX(id), SUM(id) FROM p WHERE id IN (1, 2, 3)").await;
        assert_eq!(cells(&rows), vec![vec!["3", "1", "3", "6"]]);
    }

    #[tokio::test]
    async fn cursor_is_lazy() {
        let db = ReferenceDb::new();
        let mut c = db.connect();
        run(&mut c, "CREATE TABLE t (id INT)").await;
        for i in 0..100 {
            run(&mut c, &format!("INSERT INTO t (id) VALUES ({i})")).await;
        }
        let before = db.rows_served();
        assert!(matches!(c.execute("SELECT id FROM t").await.unwrap(), Exec::Rows(_)));
        assert_eq!(db.rows_served(), before);
        c.next_row().await.unwrap().unwrap();
        assert_eq!(db.rows_served(), before + 1);
    }

    #[tokio::test]
    async fn rollback_and_dropped_connection_undo() {
        let db = ReferenceDb::new();
        let mut c = db.connect();
        run(&mut c, "CREATE TABLE t (id INT PRIMARY KEY, v TEXT)").await;
        run(&mut c, "INSERT INTO t (id, v) VALUES (1, 'a')").await;
        c.begin().await.unwrap();
        run(&mut c, "UPDATE t SET v = 'b' WHERE id = 1").await;
        run(&mut c, "INSERT INTO t (id, v) VALUES (2, 'c')").await;
        run(&mut c, "DELETE FROM t WHERE id = 1").await;
        c.rollback().await.unwrap();
        assert_eq!(cells(&run(&mut c, "SELECT * FROM t").await), vec![vec!["1", "a"]]);

        let mut d = db.connect();
        d.begin().await.unwrap();
        run(&mut d, "UPDATE t SET v = 'z'").await;
        drop(d);
        assert_eq!(cells(&run(&mut c, "SELECT v FROM t").await), vec![vec!["a"]]);
        assert_eq!(
            db.query_log()[2..5].to_vec(),
            vec!["BEGIN", "UPDATE t SET v = 'b' WHERE id = 1", "INSERT INTO t (id, v) VALUES (2, 'c')"]
        );
    }

    #[tokio::test]
    async fn transactions_serialize_writers() {
        let db = ReferenceDb::new();
        let mut a = db.connect();
        run(&mut a, "CREATE TABLE t (id INT)").await;
        a.begin().await.unwrap();
        let db2 = db.clone();
        let writer = tokio::spawn(async move {
            let mut b = db2.connect();
            b.execute("INSERT INTO t (id) VALUES (2)").await.unwrap();
        });
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
        assert!(!writer.is_finished());
        run(&mut a, "INSERT INTO t (id) VALUES (1)").await;
        a.commit().await.unwrap();
        writer.await.unwrap();
        assert_eq!(cells(&run(&mut a, "SELECT id FROM t").await), vec![vec!["1"], vec!["2"]]);
    }

    #[tokio::test]
    async fn errors() {
        let db = ReferenceDb::new();
        let mut c = db.connect();
        assert_eq!(c.execute("SELECT * FROM nope").await.unwrap_err().code, ErrorCode::BackendError);
        assert_eq!(c.execute("SELEKT 1").await.unwrap_err().code, ErrorCode::UnsupportedStatement);
        assert_eq!(c.execute("SELECT * FROM t ORDER BY x").await.unwrap_err().code, ErrorCode::SyntaxError);
        run(&mut c, "CREATE TABLE t (id INT)").await;
        assert!(c.execute("CREATE TABLE t (id INT)").await.is_err());
        run(&mut c, "CREATE TABLE IF NOT EXISTS t (id INT)").await;
        assert!(c.execute("INSERT INTO t (id) VALUES ('x')").await.is_err());
        assert!(c.commit().await.is_err());
    }
}
