use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Null,
    Int(i64),
    Str(String),
}

impl Literal {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Text form as carried in result rows.
    pub fn to_cell(&self) -> Option<String> {
        match self {
            Literal::Null => None,
            Literal::Int(i) => Some(i.to_string()),
            Literal::Str(s) => Some(s.clone()),
        }
    }

    /// Integer-looking cells become integers so they compare as such.
    pub fn from_cell(cell: Option<&str>) -> Self {
        match cell {
            None => Literal::Null,
            Some(s) => match s.parse::<i64>() {
                Ok(i) if i.to_string() == s => Literal::Int(i),
                _ => Literal::Str(s.to_owned()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Like,
}

impl CompareOp {
    pub fn as_sql(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::NotEq => "<>",
            CompareOp::Lt => "<",
            CompareOp::LtEq => "<=",
            CompareOp::Gt => ">",
            CompareOp::GtEq => ">=",
            CompareOp::Like => "LIKE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Compare {
        column: String,
        op: CompareOp,
        value: Literal,
    },
    In {
        column: String,
        values: Vec<Literal>,
    },
    SessionId(u64),
}

impl Term {
    pub fn column(&self) -> Option<&str> {
        match self {
            Term::Compare { column, .. } | Term::In { column, .. } => Some(column),
            Term::SessionId(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggregateFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggregateFunc::Count => "COUNT",
            AggregateFunc::Sum => "SUM",
            AggregateFunc::Avg => "AVG",
            AggregateFunc::Min => "MIN",
            AggregateFunc::Max => "MAX",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "COUNT" => AggregateFunc::Count,
            "SUM" => AggregateFunc::Sum,
            "AVG" => AggregateFunc::Avg,
            "MIN" => AggregateFunc::Min,
            "MAX" => AggregateFunc::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectItem {
    Column(String),
    /// `arg = None` is `*`.
    Aggregate {
        func: AggregateFunc,
        arg: Option<String>,
    },
    Literal(Literal),
}

impl SelectItem {
    /// Result column name the reference backend gives this item.
    pub fn output_name(&self) -> String {
        match self {
            SelectItem::Column(c) => c.clone(),
            SelectItem::Aggregate { func, arg } => {
                format!("{}({})", func.name(), arg.as_deref().unwrap_or("*"))
            }
            SelectItem::Literal(l) => l.to_cell().unwrap_or_else(|| "NULL".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Star,
    Items(Vec<SelectItem>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Select {
    pub projection: Projection,
    pub from: Option<String>,
    pub filter: Vec<Term>,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

impl Select {
    pub fn has_aggregate(&self) -> bool {
        matches!(&self.projection, Projection::Items(items)
            if items.iter().any(|i| matches!(i, SelectItem::Aggregate { .. })))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insert {
    pub table: String,
    pub columns: Option<Vec<String>>,
    pub rows: Vec<Vec<Literal>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub column: String,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Update {
    pub table: String,
    pub assignments: Vec<Assignment>,
    pub filter: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delete {
    pub table: String,
    pub filter: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnDef {
    pub name: String,
    /// Type tokens as written, e.g. `VARCHAR(64)`.
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateTable {
    pub name: String,
    pub if_not_exists: bool,
    pub columns: Vec<ColumnDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Procedure {
    KeyExchange {
        payload: String,
    },
    Register {
        username: String,
        envelope: String,
        session_id: u64,
    },
    Login {
        username: String,
        envelope: String,
        session_id: u64,
    },
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::KeyExchange { .. } => "KEY_EXCHANGE",
            Procedure::Register { .. } => "REGISTER",
            Procedure::Login { .. } => "LOGIN",
        }
    }
}

pub const PROCEDURE_NAMES: [&str; 3] = ["KEY_EXCHANGE", "REGISTER", "LOGIN"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnControl {
    Begin,
    Commit,
    Rollback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Select(Select),
    Insert(Insert),
    Update(Update),
    Delete(Delete),
    CreateTable(CreateTable),
    DropTable { name: String, if_exists: bool },
    Transaction(TxnControl),
    Call(Procedure),
    /// Outside the analyzed subset; carried verbatim.
    Other { sql: String },
}

impl Statement {
    pub fn kind(&self) -> &'static str {
        match self {
            Statement::Select(_) => "SELECT",
            Statement::Insert(_) => "INSERT",
            Statement::Update(_) => "UPDATE",
            Statement::Delete(_) => "DELETE",
            Statement::CreateTable(_) => "CREATE TABLE",
            Statement::DropTable { .. } => "DROP TABLE",
            Statement::Transaction(_) => "TRANSACTION",
            Statement::Call(_) => "CALL",
            Statement::Other { .. } => "OTHER",
        }
    }

    pub fn table(&self) -> Option<&str> {
        match self {
            Statement::Select(s) => s.from.as_deref(),
            Statement::Insert(i) => Some(&i.table),
            Statement::Update(u) => Some(&u.table),
            Statement::Delete(d) => Some(&d.table),
            Statement::CreateTable(c) => Some(&c.name),
            Statement::DropTable { name, .. } => Some(name),
            _ => None,
        }
    }

    /// Every literal in the statement, in source order.
    pub fn literals(&self) -> Vec<&Literal> {
        fn terms<'a>(filter: &'a [Term], out: &mut Vec<&'a Literal>) {
            for t in filter {
                match t {
                    Term::Compare { value, .. } => out.push(value),
                    Term::In { values, .. } => out.extend(values.iter()),
                    Term::SessionId(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        match self {
            Statement::Select(s) => {
                if let Projection::Items(items) = &s.projection {
                    for item in items {
                        if let SelectItem::Literal(l) = item {
                            out.push(l);
                        }
                    }
                }
                terms(&s.filter, &mut out);
            }
            Statement::Insert(i) => out.extend(i.rows.iter().flatten()),
            Statement::Update(u) => {
                out.extend(u.assignments.iter().map(|a| &a.value));
                terms(&u.filter, &mut out);
            }
            Statement::Delete(d) => terms(&d.filter, &mut out),
            _ => {}
        }
        out
    }

    pub fn filter_mut(&mut self) -> Option<&mut Vec<Term>> {
        match self {
            Statement::Select(s) => Some(&mut s.filter),
            Statement::Update(u) => Some(&mut u.filter),
            Statement::Delete(d) => Some(&mut d.filter),
            _ => None,
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::render(self))
    }
}
