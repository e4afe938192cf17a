use super::ast::*;
use super::lexer::{tokenize, TokenKind};
use super::parser::parse;
use super::render::{render, render_ident, render_literal, render_where};
use crate::blind_index::compute_bidx;
use crate::crypto::{column_ad, derive_bidx_key, derive_column_key, value_encrypt, SymmetricKey};
use crate::envelope::Envelope;
use crate::error::{ErrorCode, ProxyError};
use crate::schema::SchemaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanClass {
    Passthrough,
    CustomProcedure,
    Rewrite,
}

/// Plaintext expectation re-checked on decrypted cells. A cell passes if it
/// equals any accepted value byte for byte.
#[derive(Clone, PartialEq, Eq)]
pub struct ResidualFilter {
    pub column: String,
    pub accepted: Vec<Vec<u8>>,
}

impl ResidualFilter {
    pub fn matches(&self, plaintext: &[u8]) -> bool {
        self.accepted.iter().any(|a| a == plaintext)
    }
}

impl std::fmt::Debug for ResidualFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResidualFilter")
            .field("column", &self.column)
            .field("accepted", &format_args!("<{} values>", self.accepted.len()))
            .finish()
    }
}

/// LIMIT / OFFSET applied by the proxy after re-filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Window {
    pub offset: u64,
    pub limit: Option<u64>,
}

/// Second half of a two-step write, instantiated once the matching keys are
/// known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitWrite {
    Update {
        table: String,
        key_column: String,
        assignments: Vec<Assignment>,
    },
    Delete {
        table: String,
        key_column: String,
    },
}

impl SplitWrite {
    pub fn key_column(&self) -> &str {
        match self {
            SplitWrite::Update { key_column, .. } | SplitWrite::Delete { key_column, .. } => {
                key_column
            }
        }
    }

    fn render_with(&self, in_list: &str) -> String {
        match self {
            SplitWrite::Update {
                table,
                key_column,
                assignments,
            } => {
                let sets: Vec<String> = assignments
                    .iter()
                    .map(|a| format!("{} = {}", render_ident(&a.column), render_literal(&a.value)))
                    .collect();
                format!(
                    "UPDATE {} SET {} WHERE {} IN ({in_list})",
                    render_ident(table),
                    sets.join(", "),
                    render_ident(key_column)
                )
            }
            SplitWrite::Delete { table, key_column } => format!(
                "DELETE FROM {} WHERE {} IN ({in_list})",
                render_ident(table),
                render_ident(key_column)
            ),
        }
    }

    /// Template with a `?` placeholder for the key list.
    pub fn template(&self) -> String {
        self.render_with("?")
    }

    /// `None` for an empty key list: nothing to write.
    pub fn render_for(&self, keys: &[Literal]) -> Option<String> {
        if keys.is_empty() {
            return None;
        }
        let list: Vec<String> = keys.iter().map(render_literal).collect();
        Some(self.render_with(&list.join(", ")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateSplit {
    /// Selects the key column plus every encrypted filter column.
    pub select_ids_sql: String,
    pub write: SplitWrite,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    pub class: PlanClass,
    pub session_id: Option<u64>,
    pub table: Option<String>,
    /// Empty for passthrough and procedures, and when `update_split` is set.
    pub rewritten_sql: String,
    /// Columns appended to the projection for re-filtering; always at the end.
    pub augmented_columns: Vec<String>,
    pub residual_filters: Vec<ResidualFilter>,
    pub window: Window,
    pub update_split: Option<UpdateSplit>,
}

impl QueryPlan {
    fn bare(class: PlanClass, session_id: Option<u64>, table: Option<String>) -> Self {
        Self {
            class,
            session_id,
            table,
            rewritten_sql: String::new(),
            augmented_columns: Vec::new(),
            residual_filters: Vec::new(),
            window: Window::default(),
            update_split: None,
        }
    }
}

/// Keys of the session a rewritten statement belongs to.
pub struct SessionKeys<'a> {
    pub session_id: u64,
    /// Client-to-proxy key, opens envelopes.
    pub c2p: &'a SymmetricKey,
    /// Present once the user has logged in.
    pub ltk: Option<&'a SymmetricKey>,
}

/// A parsed, classified statement with its session identity resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analyzed {
    pub stmt: Statement,
    pub class: PlanClass,
    pub session_id: Option<u64>,
}

fn is_envelope(lit: &Literal) -> bool {
    lit.as_str().is_some_and(Envelope::looks_like)
}

fn unsupported(msg: impl Into<String>) -> ProxyError {
    ProxyError::new(ErrorCode::UnsupportedStatement, msg)
}

/// Token-level scan for statements outside the parsed subset.
fn other_touches_protected(sql: &str, cfg: &SchemaConfig) -> bool {
    let protected_name = |word: &str| {
        cfg.tables().any(|(table, t)| {
            (table == word && t.columns.iter().any(|c| c.encrypted))
                || t.columns.iter().any(|c| c.encrypted && c.column == word)
        })
    };
    let procedure = |word: &str| PROCEDURE_NAMES.iter().any(|p| p.eq_ignore_ascii_case(word));
    match tokenize(sql) {
        Ok(tokens) => tokens.iter().any(|t| match &t.kind {
            TokenKind::Ident { text, .. } => {
                protected_name(text) || procedure(text) || text.eq_ignore_ascii_case("SESSION_ID")
            }
            TokenKind::Str(s) => Envelope::looks_like(s),
            _ => false,
        }),
        Err(_) => {
            // Unlexable: fall back to substring matching, erring on the side of
            // rejection.
            let upper = sql.to_ascii_uppercase();
            sql.contains("QlgB")
                || upper.contains("SESSION_ID")
                || PROCEDURE_NAMES.iter().any(|p| upper.contains(p))
                || cfg.tables().any(|(table, t)| {
                    t.columns.iter().any(|c| c.encrypted)
                        && (sql.contains(table)
                            || t.columns.iter().any(|c| c.encrypted && sql.contains(&c.column)))
                })
        }
    }
}

fn filter_touches(filter: &[Term], cfg: &SchemaConfig, table: &str) -> bool {
    filter.iter().any(|t| match t {
        Term::SessionId(_) => true,
        Term::Compare { column, value, .. } => {
            cfg.is_encrypted(table, column) || is_envelope(value)
        }
        Term::In { column, values } => {
            cfg.is_encrypted(table, column) || values.iter().any(is_envelope)
        }
    })
}

/// Total over parsed statements.
pub fn classify(stmt: &Statement, cfg: &SchemaConfig) -> PlanClass {
    let rewrite = match stmt {
        Statement::Call(_) => return PlanClass::CustomProcedure,
        Statement::Other { sql } => other_touches_protected(sql, cfg),
        Statement::Select(s) => {
            let table = s.from.as_deref().unwrap_or("");
            let projection = match &s.projection {
                Projection::Star => cfg.has_encrypted(table),
                Projection::Items(items) => items.iter().any(|i| match i {
                    SelectItem::Column(c) => cfg.is_encrypted(table, c),
                    SelectItem::Aggregate { arg, .. } => {
                        arg.as_deref().is_some_and(|a| cfg.is_encrypted(table, a))
                    }
                    SelectItem::Literal(l) => is_envelope(l),
                }),
            };
            projection || filter_touches(&s.filter, cfg, table)
        }
        Statement::Insert(ins) => {
            let columns = match &ins.columns {
                Some(cols) => cols.iter().any(|c| cfg.is_encrypted(&ins.table, c)),
                None => cfg.has_encrypted(&ins.table),
            };
            columns || ins.rows.iter().flatten().any(is_envelope)
        }
        Statement::Update(u) => {
            u.assignments
                .iter()
                .any(|a| cfg.is_encrypted(&u.table, &a.column) || is_envelope(&a.value))
                || filter_touches(&u.filter, cfg, &u.table)
        }
        Statement::Delete(d) => filter_touches(&d.filter, cfg, &d.table),
        Statement::CreateTable(_) | Statement::DropTable { .. } | Statement::Transaction(_) => false,
    };
    if rewrite {
        PlanClass::Rewrite
    } else {
        PlanClass::Passthrough
    }
}

/// Removes every `SESSION_ID(n)` term and reconciles it with the ids carried
/// by envelope literals.
pub fn extract_session_id(stmt: &mut Statement) -> Result<Option<u64>, ProxyError> {
    let mut found: Option<u64> = None;
    let mut merge = |sid: u64, what: &str| -> Result<(), ProxyError> {
        match found {
            Some(prev) if prev != sid => Err(ProxyError::new(
                ErrorCode::SessionConflict,
                format!("{what} names session {sid} but the statement already names {prev}"),
            )),
            _ => {
                found = Some(sid);
                Ok(())
            }
        }
    };
    if let Some(filter) = stmt.filter_mut() {
        let mut ids = Vec::new();
        filter.retain(|t| match t {
            Term::SessionId(sid) => {
                ids.push(*sid);
                false
            }
            _ => true,
        });
        for sid in ids {
            merge(sid, "SESSION_ID")?;
        }
    }
    for lit in stmt.literals() {
        if let Some(env) = lit.as_str().filter(|s| Envelope::looks_like(s)) {
            let env = Envelope::decode(env)?;
            merge(env.session_id, "an encrypted value")?;
        }
    }
    Ok(found)
}

/// Key-independent checks, run before the session is looked up.
fn check_static(stmt: &Statement, cfg: &SchemaConfig) -> Result<(), ProxyError> {
    fn check_filter(filter: &[Term], cfg: &SchemaConfig, table: &str) -> Result<(), ProxyError> {
        for term in filter {
            let (column, values, op): (&str, Vec<&Literal>, CompareOp) = match term {
                Term::SessionId(_) => continue,
                Term::Compare { column, op, value } => (column, vec![value], *op),
                Term::In { column, values } => (column, values.iter().collect(), CompareOp::Eq),
            };
            if cfg.is_encrypted(table, column) {
                if op != CompareOp::Eq {
                    return Err(ProxyError::new(
                        ErrorCode::UnsupportedPredicate,
                        format!(
                            "only equality is supported on encrypted column {table}.{column}, got {}",
                            op.as_sql()
                        ),
                    ));
                }
                if values.iter().any(|v| !is_envelope(v)) {
                    return Err(ProxyError::new(
                        ErrorCode::CleartextFilterOnEncrypted,
                        format!("filter on encrypted column {table}.{column} must use an encrypted value"),
                    ));
                }
            } else if values.iter().any(|v| is_envelope(v)) {
                return Err(envelope_on_cleartext(table, column));
            }
        }
        Ok(())
    }
    fn check_write(
        cfg: &SchemaConfig,
        table: &str,
        column: &str,
        value: &Literal,
    ) -> Result<(), ProxyError> {
        if cfg.is_companion(table, column) {
            return Err(unsupported(format!(
                "{table}.{column} is a blind index maintained by the proxy"
            )));
        }
        if cfg.is_encrypted(table, column) {
            if !matches!(value, Literal::Null) && !is_envelope(value) {
                return Err(ProxyError::new(
                    ErrorCode::CleartextValueOnEncrypted,
                    format!("value for encrypted column {table}.{column} must be encrypted"),
                ));
            }
        } else if is_envelope(value) {
            return Err(envelope_on_cleartext(table, column));
        }
        Ok(())
    }

    match stmt {
        Statement::Select(s) => {
            let table = s.from.as_deref().unwrap_or("");
            let mut encrypted_ref = s
                .filter
                .iter()
                .any(|t| t.column().is_some_and(|c| cfg.is_encrypted(table, c)));
            match &s.projection {
                Projection::Star => encrypted_ref |= cfg.has_encrypted(table),
                Projection::Items(items) => {
                    for item in items {
                        match item {
                            SelectItem::Literal(l) if is_envelope(l) => {
                                return Err(ProxyError::new(
                                    ErrorCode::EnvelopeOnCleartext,
                                    "encrypted values may only appear in filters and written values",
                                ))
                            }
                            SelectItem::Column(c) => encrypted_ref |= cfg.is_encrypted(table, c),
                            SelectItem::Aggregate { arg: Some(a), .. } => {
                                encrypted_ref |= cfg.is_encrypted(table, a)
                            }
                            _ => {}
                        }
                    }
                }
            }
            if s.has_aggregate() && encrypted_ref {
                return Err(ProxyError::new(
                    ErrorCode::AggregationOverEncrypted,
                    format!("aggregation cannot be combined with encrypted columns of {table}"),
                ));
            }
            check_filter(&s.filter, cfg, table)
        }
        Statement::Insert(ins) => {
            let Some(cols) = &ins.columns else {
                if cfg.has_encrypted(&ins.table) {
                    return Err(unsupported(format!(
                        "INSERT into {} needs an explicit column list",
                        ins.table
                    )));
                }
                if ins.rows.iter().flatten().any(is_envelope) {
                    return Err(envelope_on_cleartext(&ins.table, "?"));
                }
                return Ok(());
            };
            for row in &ins.rows {
                for (col, value) in cols.iter().zip(row) {
                    check_write(cfg, &ins.table, col, value)?;
                }
            }
            Ok(())
        }
        Statement::Update(u) => {
            for a in &u.assignments {
                check_write(cfg, &u.table, &a.column, &a.value)?;
            }
            check_filter(&u.filter, cfg, &u.table)
        }
        Statement::Delete(d) => check_filter(&d.filter, cfg, &d.table),
        Statement::Other { .. } => Err(unsupported(
            "statement outside the supported subset touches encrypted data or proxy functions",
        )),
        _ => Ok(()),
    }
}

fn envelope_on_cleartext(table: &str, column: &str) -> ProxyError {
    ProxyError::new(
        ErrorCode::EnvelopeOnCleartext,
        format!("encrypted value aimed at cleartext column {table}.{column}"),
    )
}

/// Parses, classifies and, for rewrites, validates the statement and pulls
/// out its session id.
pub fn analyze(sql: &str, cfg: &SchemaConfig) -> Result<Analyzed, ProxyError> {
    let mut stmt = parse(sql)?;
    let class = classify(&stmt, cfg);
    let mut session_id = None;
    if class == PlanClass::Rewrite {
        check_static(&stmt, cfg)?;
        session_id = extract_session_id(&mut stmt)?;
        if session_id.is_none() {
            return Err(ProxyError::new(
                ErrorCode::SessionUnresolvable,
                "statement touches encrypted data but carries no session id",
            ));
        }
    }
    Ok(Analyzed {
        stmt,
        class,
        session_id,
    })
}

struct Rewriter<'a> {
    cfg: &'a SchemaConfig,
    keys: &'a SessionKeys<'a>,
    table: &'a str,
}

impl Rewriter<'_> {
    fn ltk(&self) -> Result<&SymmetricKey, ProxyError> {
        self.keys.ltk.ok_or_else(|| {
            ProxyError::new(
                ErrorCode::NotLoggedIn,
                format!("session {} has not logged in", self.keys.session_id),
            )
        })
    }

    fn open(&self, lit: &Literal) -> Result<Vec<u8>, ProxyError> {
        let text = lit.as_str().unwrap_or_default();
        let env = Envelope::decode(text)?;
        if env.session_id != self.keys.session_id {
            return Err(ProxyError::new(
                ErrorCode::SessionConflict,
                "encrypted value belongs to another session",
            ));
        }
        env.open(self.keys.c2p).map_err(|_| {
            ProxyError::new(
                ErrorCode::DecryptionFailed,
                "encrypted value does not authenticate under the session key",
            )
        })
    }

    fn store(&self, column: &str, plaintext: &[u8]) -> Result<Literal, ProxyError> {
        let key = derive_column_key(self.ltk()?, self.table, column);
        let ct = value_encrypt(&key, plaintext, &column_ad(self.table, column))?;
        Ok(Literal::Str(ct.to_text()))
    }

    fn bidx(&self, column: &str, plaintext: &[u8]) -> Result<Option<(String, Literal)>, ProxyError> {
        let Some(spec) = self.cfg.bidx_spec(self.table, column) else {
            return Ok(None);
        };
        let key = derive_bidx_key(self.ltk()?, self.table, column);
        let value = compute_bidx(&key, plaintext, &spec).to_hex();
        Ok(Some((spec.companion, Literal::Str(value))))
    }

    /// Turns encrypted terms into blind-index terms (or drops them) and
    /// records the plaintext expectations.
    fn filter(
        &self,
        filter: Vec<Term>,
    ) -> Result<(Vec<Term>, Vec<ResidualFilter>), ProxyError> {
        let mut db_terms = Vec::new();
        let mut residuals = Vec::new();
        for term in filter {
            let Some(column) = term.column().map(str::to_owned) else {
                continue;
            };
            if !self.cfg.is_encrypted(self.table, &column) {
                db_terms.push(term);
                continue;
            }
            let values = match term {
                Term::Compare { value, .. } => vec![value],
                Term::In { values, .. } => values,
                Term::SessionId(_) => unreachable!("stripped during analysis"),
            };
            let mut accepted: Vec<Vec<u8>> = Vec::new();
            for v in &values {
                let pt = self.open(v)?;
                if !accepted.contains(&pt) {
                    accepted.push(pt);
                }
            }
            if let Some(spec) = self.cfg.bidx_spec(self.table, &column) {
                let key = derive_bidx_key(self.ltk()?, self.table, &column);
                let mut hexes: Vec<Literal> = Vec::new();
                for pt in &accepted {
                    let h = Literal::Str(compute_bidx(&key, pt, &spec).to_hex());
                    if !hexes.contains(&h) {
                        hexes.push(h);
                    }
                }
                db_terms.push(if hexes.len() == 1 {
                    Term::Compare {
                        column: spec.companion,
                        op: CompareOp::Eq,
                        value: hexes.pop().expect("one"),
                    }
                } else {
                    Term::In {
                        column: spec.companion,
                        values: hexes,
                    }
                });
            }
            residuals.push(ResidualFilter { column, accepted });
        }
        Ok((db_terms, residuals))
    }

    /// Re-encrypts one written value; returns the stored literal and, when
    /// indexed, the companion column and value.
    fn write_value(
        &self,
        column: &str,
        value: Literal,
    ) -> Result<(Literal, Option<(String, Literal)>), ProxyError> {
        if !self.cfg.is_encrypted(self.table, column) {
            return Ok((value, None));
        }
        if value == Literal::Null {
            let companion = self
                .cfg
                .bidx_spec(self.table, column)
                .map(|s| (s.companion, Literal::Null));
            return Ok((Literal::Null, companion));
        }
        let pt = self.open(&value)?;
        let stored = self.store(column, &pt)?;
        Ok((stored, self.bidx(column, &pt)?))
    }

    fn select(&self, mut s: Select) -> Result<QueryPlan, ProxyError> {
        let (db_terms, residuals) = self.filter(std::mem::take(&mut s.filter))?;
        s.filter = db_terms;
        let mut augmented = Vec::new();
        if let Projection::Items(items) = &mut s.projection {
            for r in &residuals {
                let present = items
                    .iter()
                    .any(|i| matches!(i, SelectItem::Column(c) if *c == r.column));
                if !present && !augmented.contains(&r.column) {
                    augmented.push(r.column.clone());
                }
            }
            items.extend(augmented.iter().cloned().map(SelectItem::Column));
        }
        let mut window = Window::default();
        if !residuals.is_empty() && (s.limit.is_some() || s.offset.is_some()) {
            window = Window {
                offset: s.offset.take().unwrap_or(0),
                limit: s.limit.take(),
            };
        }
        let mut plan = QueryPlan::bare(
            PlanClass::Rewrite,
            Some(self.keys.session_id),
            Some(self.table.to_owned()),
        );
        plan.rewritten_sql = render(&Statement::Select(s));
        plan.augmented_columns = augmented;
        plan.residual_filters = residuals;
        plan.window = window;
        Ok(plan)
    }

    fn insert(&self, mut ins: Insert) -> Result<QueryPlan, ProxyError> {
        let columns = ins.columns.clone().unwrap_or_default();
        let mut extra: Vec<String> = Vec::new();
        for col in &columns {
            if let Some(spec) = self.cfg.bidx_spec(self.table, col) {
                extra.push(spec.companion);
            }
        }
        let mut rows = Vec::with_capacity(ins.rows.len());
        for row in std::mem::take(&mut ins.rows) {
            let mut out = Vec::with_capacity(row.len() + extra.len());
            let mut companions = Vec::new();
            for (col, value) in columns.iter().zip(row) {
                let (stored, companion) = self.write_value(col, value)?;
                out.push(stored);
                if let Some((_, v)) = companion {
                    companions.push(v);
                }
            }
            out.extend(companions);
            rows.push(out);
        }
        ins.rows = rows;
        if let Some(cols) = &mut ins.columns {
            cols.extend(extra);
        }
        let mut plan = QueryPlan::bare(
            PlanClass::Rewrite,
            Some(self.keys.session_id),
            Some(self.table.to_owned()),
        );
        plan.rewritten_sql = render(&Statement::Insert(ins));
        Ok(plan)
    }

    fn assignments(&self, assignments: Vec<Assignment>) -> Result<Vec<Assignment>, ProxyError> {
        let mut out = Vec::with_capacity(assignments.len());
        let mut companions = Vec::new();
        for a in assignments {
            let (value, companion) = self.write_value(&a.column, a.value)?;
            out.push(Assignment {
                column: a.column,
                value,
            });
            if let Some((column, value)) = companion {
                companions.push(Assignment { column, value });
            }
        }
        out.extend(companions);
        Ok(out)
    }

    /// UPDATE and DELETE: a single rewritten statement when the filter is
    /// cleartext, otherwise the select-keys-then-write split.
    fn write(
        &self,
        filter: Vec<Term>,
        make: impl FnOnce(Vec<Term>, String) -> (Statement, SplitWrite),
    ) -> Result<QueryPlan, ProxyError> {
        let encrypted_filter = filter
            .iter()
            .any(|t| t.column().is_some_and(|c| self.cfg.is_encrypted(self.table, c)));
        let key_column = self.cfg.key_column(self.table).to_owned();
        let mut plan = QueryPlan::bare(
            PlanClass::Rewrite,
            Some(self.keys.session_id),
            Some(self.table.to_owned()),
        );
        if !encrypted_filter {
            let (stmt, _) = make(filter, key_column);
            plan.rewritten_sql = render(&stmt);
            return Ok(plan);
        }
        let (db_terms, residuals) = self.filter(filter)?;
        let mut augmented = Vec::new();
        for r in &residuals {
            if !augmented.contains(&r.column) {
                augmented.push(r.column.clone());
            }
        }
        let mut projection = vec![render_ident(&key_column)];
        projection.extend(augmented.iter().map(|c| render_ident(c)));
        let select_ids_sql = format!(
            "SELECT {} FROM {}{}",
            projection.join(", "),
            render_ident(self.table),
            render_where(&db_terms)
        );
        let (_, write) = make(Vec::new(), key_column);
        plan.augmented_columns = augmented;
        plan.residual_filters = residuals;
        plan.update_split = Some(UpdateSplit {
            select_ids_sql,
            write,
        });
        Ok(plan)
    }
}

/// Builds the execution plan. `keys` is required for rewrites.
pub fn rewrite(
    analyzed: Analyzed,
    cfg: &SchemaConfig,
    keys: Option<&SessionKeys<'_>>,
) -> Result<QueryPlan, ProxyError> {
    let table = analyzed.stmt.table().map(str::to_owned);
    if analyzed.class != PlanClass::Rewrite {
        return Ok(QueryPlan::bare(analyzed.class, None, table));
    }
    let Some(keys) = keys else {
        return Err(ProxyError::new(
            ErrorCode::SessionUnresolvable,
            "statement touches encrypted data but no session is available",
        ));
    };
    if analyzed.session_id.is_some_and(|sid| sid != keys.session_id) {
        return Err(ProxyError::new(
            ErrorCode::SessionConflict,
            "statement names a different session",
        ));
    }
    let table_name = table.clone().unwrap_or_default();
    let rw = Rewriter {
        cfg,
        keys,
        table: &table_name,
    };
    match analyzed.stmt {
        Statement::Select(s) => {
            let touches = cfg.has_encrypted(&table_name)
                && (matches!(s.projection, Projection::Star) || !s.filter.is_empty()
                    || matches!(&s.projection, Projection::Items(items)
                        if items.iter().any(|i| matches!(i, SelectItem::Column(c) if cfg.is_encrypted(&table_name, c)))));
            if touches {
                rw.ltk()?;
            }
            rw.select(s)
        }
        Statement::Insert(ins) => rw.insert(ins),
        Statement::Update(u) => {
            let assignments = rw.assignments(u.assignments)?;
            let table = u.table;
            rw.write(u.filter, move |filter, key_column| {
                (
                    Statement::Update(Update {
                        table: table.clone(),
                        assignments: assignments.clone(),
                        filter,
                    }),
                    SplitWrite::Update {
                        table,
                        key_column,
                        assignments,
                    },
                )
            })
        }
        Statement::Delete(d) => {
            let table = d.table;
            rw.write(d.filter, move |filter, key_column| {
                (
                    Statement::Delete(Delete {
                        table: table.clone(),
                        filter,
                    }),
                    SplitWrite::Delete { table, key_column },
                )
            })
        }
        other => Err(unsupported(format!(
            "{} statements cannot be rewritten",
            other.kind()
        ))),
    }
}
