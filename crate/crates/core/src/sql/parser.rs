use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use crate::error::{ErrorCode, ProxyError};

/// Words that must be backquoted to be used as identifiers.
pub(crate) const RESERVED: &[&str] = &[
    "SELECT",
    "FROM",
    "WHERE",
    "AND",
    "OR",
    "NOT",
    "INSERT",
    "INTO",
    "VALUES",
    "UPDATE",
    "SET",
    "DELETE",
    "LIMIT",
    "OFFSET",
    "IN",
    "LIKE",
    "NULL",
    "CREATE",
    "TABLE",
    "DROP",
    "IF",
    "EXISTS",
    "ORDER",
    "BY",
    "GROUP",
    "HAVING",
    "JOIN",
    "ON",
    "AS",
    "IS",
    "UNION",
    "DISTINCT",
    "BEGIN",
    "COMMIT",
    "ROLLBACK",
    "START",
    "TRANSACTION",
];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

const CONSTRAINT_WORDS: &[&str] = &["PRIMARY", "UNIQUE", "KEY", "INDEX", "CONSTRAINT", "FOREIGN"];

/// Parses one statement. Statements whose leading keyword is outside the
/// analyzed subset come back as [`Statement::Other`].
pub fn parse(sql: &str) -> Result<Statement, ProxyError> {
    let lead: String = sql
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_uppercase();
    let analyzed = matches!(
        lead.as_str(),
        "SELECT" | "INSERT" | "UPDATE" | "DELETE" | "CREATE" | "DROP" | "BEGIN" | "START"
            | "COMMIT" | "ROLLBACK"
    );
    if !analyzed {
        return Ok(Statement::Other {
            sql: sql.to_owned(),
        });
    }
    let tokens = tokenize(sql)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        end: sql.len(),
    };
    let stmt = match lead.as_str() {
        "SELECT" => p.select()?,
        "INSERT" => Statement::Insert(p.insert()?),
        "UPDATE" => Statement::Update(p.update()?),
        "DELETE" => Statement::Delete(p.delete()?),
        "CREATE" => {
            if !p.peek_at(1).is_some_and(|t| t.is_keyword("TABLE")) {
                return Ok(Statement::Other {
                    sql: sql.to_owned(),
                });
            }
            Statement::CreateTable(p.create_table()?)
        }
        "DROP" => {
            if !p.peek_at(1).is_some_and(|t| t.is_keyword("TABLE")) {
                return Ok(Statement::Other {
                    sql: sql.to_owned(),
                });
            }
            p.drop_table()?
        }
        _ => Statement::Transaction(p.transaction()?),
    };
    p.finish()?;
    Ok(stmt)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

enum ParsedItem {
    Item(SelectItem),
    Proc(Procedure),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n)
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn err(&self, msg: impl Into<String>) -> ProxyError {
        ProxyError::new(
            ErrorCode::SyntaxError,
            format!("{} at position {}", msg.into(), self.here()),
        )
    }

    fn unsupported(&self, msg: impl Into<String>) -> ProxyError {
        ProxyError::new(
            ErrorCode::UnsupportedStatement,
            format!("{} at position {}", msg.into(), self.here()),
        )
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ProxyError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected {kw}")))
        }
    }

    fn at(&self, kind: &TokenKind) -> bool {
        self.peek().is_some_and(|t| &t.kind == kind)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), ProxyError> {
        if self.eat(&kind) {
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn finish(&mut self) -> Result<(), ProxyError> {
        self.eat(&TokenKind::Semicolon);
        if self.peek().is_some() {
            let clause = match &self.peek().expect("checked").kind {
                TokenKind::Ident { text, quoted: false } if is_reserved(text) => {
                    format!("unsupported clause {}", text.to_ascii_uppercase())
                }
                _ => "unexpected trailing input".to_owned(),
            };
            return Err(self.err(clause));
        }
        Ok(())
    }

    fn ident(&mut self) -> Result<String, ProxyError> {
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Ident { text, quoted }) => {
                if !quoted && is_reserved(&text) {
                    return Err(self.err(format!("unexpected keyword {}", text.to_uppercase())));
                }
                self.pos += 1;
                Ok(text)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn unsigned(&mut self) -> Result<u64, ProxyError> {
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Number(digits)) => {
                let v = digits
                    .parse::<u64>()
                    .map_err(|_| self.err("number out of range"))?;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected number")),
        }
    }

    fn literal(&mut self) -> Result<Literal, ProxyError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.err("expected literal"));
        };
        match tok.kind {
            TokenKind::Str(s) => {
                self.pos += 1;
                Ok(Literal::Str(s))
            }
            TokenKind::Number(digits) => {
                let v = digits
                    .parse::<i64>()
                    .map_err(|_| self.err("number out of range"))?;
                self.pos += 1;
                Ok(Literal::Int(v))
            }
            TokenKind::Minus => {
                self.pos += 1;
                match self.peek().map(|t| t.kind.clone()) {
                    Some(TokenKind::Number(digits)) => {
                        let v = format!("-{digits}")
                            .parse::<i64>()
                            .map_err(|_| self.err("number out of range"))?;
                        self.pos += 1;
                        Ok(Literal::Int(v))
                    }
                    _ => Err(self.err("expected number after '-'")),
                }
            }
            _ if tok.is_keyword("NULL") => {
                self.pos += 1;
                Ok(Literal::Null)
            }
            _ => Err(self.err("expected literal")),
        }
    }

    fn string(&mut self) -> Result<String, ProxyError> {
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Str(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected string literal")),
        }
    }

    fn select(&mut self) -> Result<Statement, ProxyError> {
        self.expect_keyword("SELECT")?;
        let mut items = Vec::new();
        let projection_pos = self.here();
        let star = self.eat(&TokenKind::Star);
        if !star {
            loop {
                items.push(self.select_item()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let from = if self.eat_keyword("FROM") {
            Some(self.ident()?)
        } else {
            None
        };
        let filter = self.where_clause()?;
        let (limit, offset) = self.limit_clause()?;

        let procs = items
            .iter()
            .filter(|i| matches!(i, ParsedItem::Proc(_)))
            .count();
        if procs > 0 {
            if items.len() != 1 || from.is_some() || !filter.is_empty() || limit.is_some() {
                return Err(ProxyError::new(
                    ErrorCode::UnsupportedStatement,
                    format!(
                        "proxy procedures must be called alone as SELECT PROC(...) at position {projection_pos}"
                    ),
                ));
            }
            let Some(ParsedItem::Proc(proc)) = items.pop() else {
                unreachable!("counted one procedure")
            };
            return Ok(Statement::Call(proc));
        }
        let projection = if star {
            Projection::Star
        } else {
            Projection::Items(
                items
                    .into_iter()
                    .map(|i| match i {
                        ParsedItem::Item(item) => item,
                        ParsedItem::Proc(_) => unreachable!("no procedures left"),
                    })
                    .collect(),
            )
        };
        Ok(Statement::Select(Select {
            projection,
            from,
            filter,
            limit,
            offset,
        }))
    }

    fn select_item(&mut self) -> Result<ParsedItem, ProxyError> {
        let tok = self.peek().cloned();
        if let Some(Token {
            kind: TokenKind::Ident { text, quoted: false },
            ..
        }) = &tok
        {
            if self.peek_at(1).is_some_and(|t| t.kind == TokenKind::LParen) {
                let upper = text.to_ascii_uppercase();
                if PROCEDURE_NAMES.contains(&upper.as_str()) {
                    return self.procedure(&upper).map(ParsedItem::Proc);
                }
                if let Some(func) = AggregateFunc::from_name(&upper) {
                    self.pos += 2;
                    let arg = if self.eat(&TokenKind::Star) {
                        None
                    } else {
                        Some(self.ident()?)
                    };
                    self.expect(TokenKind::RParen, "')'")?;
                    return Ok(ParsedItem::Item(SelectItem::Aggregate { func, arg }));
                }
                return Err(self.unsupported(format!("unsupported function {upper}")));
            }
            if !is_reserved(text) {
                self.pos += 1;
                return Ok(ParsedItem::Item(SelectItem::Column(text.clone())));
            }
            if !text.eq_ignore_ascii_case("NULL") {
                return Err(self.err(format!("unexpected keyword {}", text.to_uppercase())));
            }
        }
        if let Some(Token {
            kind: TokenKind::Ident { text, quoted: true },
            ..
        }) = tok
        {
            self.pos += 1;
            return Ok(ParsedItem::Item(SelectItem::Column(text)));
        }
        Ok(ParsedItem::Item(SelectItem::Literal(self.literal()?)))
    }

    fn procedure(&mut self, name: &str) -> Result<Procedure, ProxyError> {
        self.pos += 1;
        self.expect(TokenKind::LParen, "'('")?;
        let proc = if name == "KEY_EXCHANGE" {
            Procedure::KeyExchange {
                payload: self.string()?,
            }
        } else {
            let username = self.string()?;
            self.expect(TokenKind::Comma, "','")?;
            let envelope = self.string()?;
            self.expect(TokenKind::Comma, "','")?;
            let session_id = self.unsigned()?;
            if name == "REGISTER" {
                Procedure::Register {
                    username,
                    envelope,
                    session_id,
                }
            } else {
                Procedure::Login {
                    username,
                    envelope,
                    session_id,
                }
            }
        };
        self.expect(TokenKind::RParen, "')'")?;
        Ok(proc)
    }

    fn where_clause(&mut self) -> Result<Vec<Term>, ProxyError> {
        let mut terms = Vec::new();
        if !self.eat_keyword("WHERE") {
            return Ok(terms);
        }
        loop {
            terms.push(self.term()?);
            if self.at_keyword("OR") {
                return Err(self.unsupported("OR is not supported"));
            }
            if !self.eat_keyword("AND") {
                break;
            }
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term, ProxyError> {
        if self.at_keyword("SESSION_ID") && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::LParen)
        {
            self.pos += 2;
            let sid = self.unsigned()?;
            self.expect(TokenKind::RParen, "')'")?;
            return Ok(Term::SessionId(sid));
        }
        if self.at(&TokenKind::LParen) {
            return Err(self.unsupported("parenthesized predicates are not supported"));
        }
        let column = self.ident()?;
        let op = match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Eq) => CompareOp::Eq,
            Some(TokenKind::NotEq) => CompareOp::NotEq,
            Some(TokenKind::Lt) => CompareOp::Lt,
            Some(TokenKind::LtEq) => CompareOp::LtEq,
            Some(TokenKind::Gt) => CompareOp::Gt,
            Some(TokenKind::GtEq) => CompareOp::GtEq,
            _ if self.at_keyword("LIKE") => CompareOp::Like,
            _ if self.at_keyword("IN") => {
                self.pos += 1;
                self.expect(TokenKind::LParen, "'('")?;
                let mut values = vec![self.literal()?];
                while self.eat(&TokenKind::Comma) {
                    values.push(self.literal()?);
                }
                self.expect(TokenKind::RParen, "')'")?;
                return Ok(Term::In { column, values });
            }
            _ => return Err(self.unsupported("expected comparison operator")),
        };
        self.pos += 1;
        let value = self.literal()?;
        Ok(Term::Compare { column, op, value })
    }

    fn limit_clause(&mut self) -> Result<(Option<u64>, Option<u64>), ProxyError> {
        if !self.eat_keyword("LIMIT") {
            if self.at_keyword("OFFSET") {
                return Err(self.err("OFFSET requires LIMIT"));
            }
            return Ok((None, None));
        }
        let first = self.unsigned()?;
        if self.eat(&TokenKind::Comma) {
            // MySQL form: LIMIT offset, count
            let count = self.unsigned()?;
            return Ok((Some(count), Some(first)));
        }
        let offset = if self.eat_keyword("OFFSET") {
            Some(self.unsigned()?)
        } else {
            None
        };
        Ok((Some(first), offset))
    }

    fn insert(&mut self) -> Result<Insert, ProxyError> {
        self.expect_keyword("INSERT")?;
        self.expect_keyword("INTO")?;
        let table = self.ident()?;
        let columns = if self.eat(&TokenKind::LParen) {
            let mut cols = vec![self.ident()?];
            while self.eat(&TokenKind::Comma) {
                cols.push(self.ident()?);
            }
            self.expect(TokenKind::RParen, "')'")?;
            Some(cols)
        } else {
            None
        };
        self.expect_keyword("VALUES")?;
        let mut rows = Vec::new();
        loop {
            self.expect(TokenKind::LParen, "'('")?;
            let mut row = vec![self.literal()?];
            while self.eat(&TokenKind::Comma) {
                row.push(self.literal()?);
            }
            self.expect(TokenKind::RParen, "')'")?;
            if let Some(cols) = &columns {
                if cols.len() != row.len() {
                    return Err(self.err(format!(
                        "row has {} values for {} columns",
                        row.len(),
                        cols.len()
                    )));
                }
            }
            rows.push(row);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(Insert {
            table,
            columns,
            rows,
        })
    }

    fn update(&mut self) -> Result<Update, ProxyError> {
        self.expect_keyword("UPDATE")?;
        let table = self.ident()?;
        self.expect_keyword("SET")?;
        let mut assignments = Vec::new();
        loop {
            let column = self.ident()?;
            self.expect(TokenKind::Eq, "'='")?;
            let value = self.literal()?;
            assignments.push(Assignment { column, value });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        let filter = self.where_clause()?;
        Ok(Update {
            table,
            assignments,
            filter,
        })
    }

    fn delete(&mut self) -> Result<Delete, ProxyError> {
        self.expect_keyword("DELETE")?;
        self.expect_keyword("FROM")?;
        let table = self.ident()?;
        let filter = self.where_clause()?;
        Ok(Delete { table, filter })
    }

    fn create_table(&mut self) -> Result<CreateTable, ProxyError> {
        self.expect_keyword("CREATE")?;
        self.expect_keyword("TABLE")?;
        let if_not_exists = if self.eat_keyword("IF") {
            self.expect_keyword("NOT")?;
            self.expect_keyword("EXISTS")?;
            true
        } else {
            false
        };
        let name = self.ident()?;
        self.expect(TokenKind::LParen, "'('")?;
        let mut columns = Vec::new();
        loop {
            let is_constraint = matches!(
                self.peek().map(|t| &t.kind),
                Some(TokenKind::Ident { text, quoted: false })
                    if CONSTRAINT_WORDS.iter().any(|w| w.eq_ignore_ascii_case(text))
            );
            let col_name = if is_constraint { None } else { Some(self.ident()?) };
            let ty = self.type_tokens()?;
            if let Some(name) = col_name {
                if ty.is_empty() {
                    return Err(self.err("expected column type"));
                }
                columns.push(ColumnDef { name, ty });
            }
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect(TokenKind::RParen, "')'")?;
        Ok(CreateTable {
            name,
            if_not_exists,
            columns,
        })
    }

    /// Collects tokens up to the next top-level `,` or `)` in canonical
    /// spacing.
    fn type_tokens(&mut self) -> Result<String, ProxyError> {
        let mut out = String::new();
        let mut depth = 0usize;
        while let Some(tok) = self.peek().cloned() {
            match &tok.kind {
                TokenKind::Comma | TokenKind::RParen if depth == 0 => break,
                TokenKind::LParen => {
                    depth += 1;
                    out.push('(');
                }
                TokenKind::RParen => {
                    depth -= 1;
                    out.push(')');
                }
                TokenKind::Comma => out.push(','),
                TokenKind::Ident { text, quoted } => {
                    if !out.is_empty() && !out.ends_with('(') && !out.ends_with(',') {
                        out.push(' ');
                    }
                    if *quoted {
                        out.push_str(&super::render::render_ident(text));
                    } else {
                        out.push_str(&text.to_ascii_uppercase());
                    }
                }
                TokenKind::Number(n) => {
                    if !out.is_empty() && !out.ends_with('(') && !out.ends_with(',') {
                        out.push(' ');
                    }
                    out.push_str(n);
                }
                TokenKind::Str(s) => {
                    if !out.is_empty() && !out.ends_with('(') && !out.ends_with(',') {
                        out.push(' ');
                    }
                    out.push_str(&super::render::render_literal(&Literal::Str(s.clone())));
                }
                _ => return Err(self.err("unexpected token in column definition")),
            }
            self.pos += 1;
        }
        Ok(out)
    }

    fn drop_table(&mut self) -> Result<Statement, ProxyError> {
        self.expect_keyword("DROP")?;
        self.expect_keyword("TABLE")?;
        let if_exists = if self.eat_keyword("IF") {
            self.expect_keyword("EXISTS")?;
            true
        } else {
            false
        };
        let name = self.ident()?;
        Ok(Statement::DropTable { name, if_exists })
    }

    fn transaction(&mut self) -> Result<TxnControl, ProxyError> {
        let ctl = match self.next() {
            Some(t) if t.is_keyword("BEGIN") => TxnControl::Begin,
            Some(t) if t.is_keyword("START") => {
                self.expect_keyword("TRANSACTION")?;
                TxnControl::Begin
            }
            Some(t) if t.is_keyword("COMMIT") => TxnControl::Commit,
            Some(t) if t.is_keyword("ROLLBACK") => TxnControl::Rollback,
            _ => return Err(self.err("expected transaction statement")),
        };
        self.eat_keyword("WORK");
        Ok(ctl)
    }
}
