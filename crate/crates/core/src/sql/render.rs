use super::ast::*;
use super::parser::is_reserved;

/// Identifiers are emitted bare when they lex back as the same plain word,
/// otherwise backquoted.
pub fn render_ident(name: &str) -> String {
    let plain = !name.is_empty()
        && name
            .bytes()
            .next()
            .is_some_and(|b| b.is_ascii_alphabetic() || b == b'_' || b == b'$')
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'$')
        && !is_reserved(name)
        && !PROCEDURE_NAMES.iter().any(|p| p.eq_ignore_ascii_case(name))
        && !name.eq_ignore_ascii_case("SESSION_ID");
    if plain {
        name.to_owned()
    } else {
        format!("`{}`", name.replace('`', "``"))
    }
}

/// Strings are single-quoted with `'` doubled and backslashes escaped, which
/// reads back identically under both standard and MySQL escaping.
pub fn render_literal(lit: &Literal) -> String {
    match lit {
        Literal::Null => "NULL".to_owned(),
        Literal::Int(i) => i.to_string(),
        Literal::Str(s) => {
            let mut out = String::with_capacity(s.len() + 2);
            out.push('\'');
            for c in s.chars() {
                match c {
                    '\'' => out.push_str("''"),
                    '\\' => out.push_str("\\\\"),
                    c => out.push(c),
                }
            }
            out.push('\'');
            out
        }
    }
}

fn render_term(t: &Term) -> String {
    match t {
        Term::Compare { column, op, value } => format!(
            "{} {} {}",
            render_ident(column),
            op.as_sql(),
            render_literal(value)
        ),
        Term::In { column, values } => format!(
            "{} IN ({})",
            render_ident(column),
            values.iter().map(render_literal).collect::<Vec<_>>().join(", ")
        ),
        Term::SessionId(sid) => format!("SESSION_ID({sid})"),
    }
}

pub(crate) fn render_where(filter: &[Term]) -> String {
    if filter.is_empty() {
        String::new()
    } else {
        format!(
            " WHERE {}",
            filter.iter().map(render_term).collect::<Vec<_>>().join(" AND ")
        )
    }
}

fn render_item(item: &SelectItem) -> String {
    match item {
        SelectItem::Column(c) => render_ident(c),
        SelectItem::Aggregate { func, arg } => format!(
            "{}({})",
            func.name(),
            arg.as_deref().map(render_ident).unwrap_or_else(|| "*".into())
        ),
        SelectItem::Literal(l) => render_literal(l),
    }
}

fn render_select(s: &Select) -> String {
    let mut out = String::from("SELECT ");
    match &s.projection {
        Projection::Star => out.push('*'),
        Projection::Items(items) => {
            out.push_str(&items.iter().map(render_item).collect::<Vec<_>>().join(", "))
        }
    }
    if let Some(from) = &s.from {
        out.push_str(" FROM ");
        out.push_str(&render_ident(from));
    }
    out.push_str(&render_where(&s.filter));
    if let Some(limit) = s.limit {
        out.push_str(&format!(" LIMIT {limit}"));
        if let Some(offset) = s.offset {
            out.push_str(&format!(" OFFSET {offset}"));
        }
    }
    out
}

fn render_procedure(p: &Procedure) -> String {
    let s = |v: &str| render_literal(&Literal::Str(v.to_owned()));
    match p {
        Procedure::KeyExchange { payload } => format!("SELECT KEY_EXCHANGE({})", s(payload)),
        Procedure::Register {
            username,
            envelope,
            session_id,
        }
        | Procedure::Login {
            username,
            envelope,
            session_id,
        } => format!(
            "SELECT {}({}, {}, {session_id})",
            p.name(),
            s(username),
            s(envelope)
        ),
    }
}

pub fn render(stmt: &Statement) -> String {
    match stmt {
        Statement::Select(s) => render_select(s),
        Statement::Insert(ins) => {
            let mut out = format!("INSERT INTO {}", render_ident(&ins.table));
            if let Some(cols) = &ins.columns {
                out.push_str(&format!(
                    " ({})",
                    cols.iter().map(|c| render_ident(c)).collect::<Vec<_>>().join(", ")
                ));
            }
            out.push_str(" VALUES ");
            let rows: Vec<String> = ins
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "({})",
                        r.iter().map(render_literal).collect::<Vec<_>>().join(", ")
                    )
                })
                .collect();
            out.push_str(&rows.join(", "));
            out
        }
        Statement::Update(u) => {
            let sets: Vec<String> = u
                .assignments
                .iter()
                .map(|a| format!("{} = {}", render_ident(&a.column), render_literal(&a.value)))
                .collect();
            format!(
                "UPDATE {} SET {}{}",
                render_ident(&u.table),
                sets.join(", "),
                render_where(&u.filter)
            )
        }
        Statement::Delete(d) => format!(
            "DELETE FROM {}{}",
            render_ident(&d.table),
            render_where(&d.filter)
        ),
        Statement::CreateTable(c) => {
            let cols: Vec<String> = c
                .columns
                .iter()
                .map(|d| format!("{} {}", render_ident(&d.name), d.ty))
                .collect();
            format!(
                "CREATE TABLE {}{} ({})",
                if c.if_not_exists { "IF NOT EXISTS " } else { "" },
                render_ident(&c.name),
                cols.join(", ")
            )
        }
        Statement::DropTable { name, if_exists } => format!(
            "DROP TABLE {}{}",
            if *if_exists { "IF EXISTS " } else { "" },
            render_ident(name)
        ),
        Statement::Transaction(TxnControl::Begin) => "BEGIN".to_owned(),
        Statement::Transaction(TxnControl::Commit) => "COMMIT".to_owned(),
        Statement::Transaction(TxnControl::Rollback) => "ROLLBACK".to_owned(),
        Statement::Call(p) => render_procedure(p),
        Statement::Other { sql } => sql.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn canonical_forms() {
        let q = "select name from `patients` where ssn = 'a''b\\\\c' and SESSION_ID(7) limit 3 offset 1;";
        assert_eq!(
            render(&parse(q).unwrap()),
            "SELECT name FROM patients WHERE ssn = 'a''b\\\\c' AND SESSION_ID(7) LIMIT 3 OFFSET 1"
        );
        assert_eq!(render_ident("from"), "`from`");
        assert_eq!(render_ident("a b"), "`a b`");
        assert_eq!(render_ident("9x"), "`9x`");
        assert_eq!(render_ident("ssn__bidx"), "ssn__bidx");
        assert_eq!(render_ident("login"), "`login`");
    }

    #[test]
    fn envelope_literals_survive() {
        let env = "QlgBAAAAAAAAAAf/+A==";
        let q = format!("INSERT INTO t (a) VALUES ('{env}')");
        let stmt = parse(&q).unwrap();
        assert_eq!(render(&stmt), q);
        assert_eq!(stmt.literals(), vec![&Literal::Str(env.into())]);
    }
}
