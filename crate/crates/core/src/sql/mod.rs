//! SQL subset: parsing, rendering, classification and rewriting.
//!
//! Supported statements are single-table `SELECT` / `INSERT` / `UPDATE` /
//! `DELETE` whose `WHERE` clause is an `AND` of `column <op> literal`,
//! `column IN (...)` and `SESSION_ID(n)` terms, plus `LIMIT` / `OFFSET`,
//! `CREATE TABLE`, `DROP TABLE`, transaction control and the proxy's three
//! procedures (`KEY_EXCHANGE`, `REGISTER`, `LOGIN`).
//!
//! Anything outside the subset is forwarded verbatim as long as it does not
//! mention an encrypted table, a proxy procedure or an envelope; otherwise it
//! is rejected.

mod ast;
mod lexer;
mod parser;
mod plan;
mod render;

pub use ast::*;
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;
pub use plan::{
    analyze, classify, extract_session_id, rewrite, Analyzed, PlanClass, QueryPlan,
    ResidualFilter, SessionKeys, SplitWrite, UpdateSplit, Window,
};
pub use render::{render, render_ident, render_literal};
