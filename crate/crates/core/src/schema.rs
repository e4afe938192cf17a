//! Which columns are encrypted, and how their blind indices are sized.
//!
//! The file is TOML with one table per database table:
//!
//! ```toml
//! [patients]
//! key_column = "id"              # optional, default "id"
//! encrypted = ["name", "ssn"]
//! blind_index.ssn.bits = 13
//! blind_index.ssn.companion = "ssn__bidx"   # optional, this is the default
//! ```
//!
//! Identifiers match case-sensitively. A column with a blind index must also
//! be listed under `encrypted`. An empty file is a valid config under which
//! the proxy forwards everything untouched.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Deserialize;
use toml::Spanned;

use crate::blind_index::{companion_name, BlindIndexSpec, MAX_BITS};

pub const DEFAULT_KEY_COLUMN: &str = "id";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct SchemaError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnConfig {
    pub column: String,
    pub encrypted: bool,
    pub bidx_bits: Option<u32>,
    pub companion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableConfig {
    pub key_column: String,
    pub columns: Vec<ColumnConfig>,
}

impl TableConfig {
    pub fn column(&self, name: &str) -> Option<&ColumnConfig> {
        self.columns.iter().find(|c| c.column == name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaConfig {
    tables: BTreeMap<String, TableConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    key_column: Option<Spanned<String>>,
    #[serde(default)]
    encrypted: Vec<Spanned<String>>,
    #[serde(default)]
    blind_index: BTreeMap<String, RawIndex>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIndex {
    bits: Spanned<i64>,
    companion: Option<Spanned<String>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn load_config(text: &str) -> Result<SchemaConfig, SchemaError> {
    let raw: BTreeMap<String, RawTable> = toml::from_str(text).map_err(|e| SchemaError {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_owned(),
    })?;
    let err = |offset: usize, message: String| SchemaError {
        line: Some(line_of(text, offset)),
        message,
    };

    let mut tables = BTreeMap::new();
    for (table, raw) in raw {
        let key_column = raw
            .key_column
            .as_ref()
            .map(|k| k.get_ref().clone())
            .unwrap_or_else(|| DEFAULT_KEY_COLUMN.to_owned());
        let mut columns: Vec<ColumnConfig> = Vec::new();
        for col in &raw.encrypted {
            let name = col.get_ref();
            if columns.iter().any(|c| &c.column == name) {
                return Err(err(
                    col.span().start,
                    format!("duplicate column {table}.{name}"),
                ));
            }
            if *name == key_column {
                return Err(err(
                    col.span().start,
                    format!("key column {table}.{name} cannot be encrypted"),
                ));
            }
            columns.push(ColumnConfig {
                column: name.clone(),
                encrypted: true,
                bidx_bits: None,
                companion: None,
            });
        }
        for (column, index) in &raw.blind_index {
            let at = index.bits.span().start;
            let Some(entry) = columns.iter_mut().find(|c| &c.column == column) else {
                return Err(err(
                    at,
                    format!("blind index on {table}.{column}, which is not encrypted"),
                ));
            };
            let bits = *index.bits.get_ref();
            if !(1..=MAX_BITS as i64).contains(&bits) {
                return Err(err(
                    index.bits.span().start,
                    format!("blind index width {bits} outside 1..={MAX_BITS}"),
                ));
            }
            entry.bidx_bits = Some(bits as u32);
            entry.companion = Some(
                index
                    .companion
                    .as_ref()
                    .map(|c| c.get_ref().clone())
                    .unwrap_or_else(|| companion_name(column)),
            );
        }
        let mut seen: HashSet<&str> = columns.iter().map(|c| c.column.as_str()).collect();
        seen.insert(key_column.as_str());
        for (column, index) in &raw.blind_index {
            let companion = columns
                .iter()
                .find(|c| &c.column == column)
                .and_then(|c| c.companion.as_deref())
                .expect("set above");
            if !seen.insert(companion) {
                return Err(err(
                    index.bits.span().start,
                    format!("companion column {table}.{companion} collides with another column"),
                ));
            }
        }
        tables.insert(
            table,
            TableConfig {
                key_column,
                columns,
            },
        );
    }
    Ok(SchemaConfig { tables })
}

impl SchemaConfig {
    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table(&self, table: &str) -> Option<&TableConfig> {
        self.tables.get(table)
    }

    pub fn tables(&self) -> impl Iterator<Item = (&str, &TableConfig)> {
        self.tables.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_encrypted(&self, table: &str, column: &str) -> bool {
        self.table(table)
            .and_then(|t| t.column(column))
            .is_some_and(|c| c.encrypted)
    }

    pub fn has_encrypted(&self, table: &str) -> bool {
        self.table(table)
            .is_some_and(|t| t.columns.iter().any(|c| c.encrypted))
    }

    pub fn encrypted_columns<'a>(&'a self, table: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.table(table)
            .into_iter()
            .flat_map(|t| t.columns.iter().filter(|c| c.encrypted))
            .map(|c| c.column.as_str())
    }

    pub fn bidx_spec(&self, table: &str, column: &str) -> Option<BlindIndexSpec> {
        let col = self.table(table)?.column(column)?;
        Some(BlindIndexSpec {
            table: table.to_owned(),
            column: column.to_owned(),
            bits: col.bidx_bits?,
            companion: col.companion.clone()?,
        })
    }

    pub fn is_companion(&self, table: &str, column: &str) -> bool {
        self.table(table).is_some_and(|t| {
            t.columns
                .iter()
                .any(|c| c.companion.as_deref() == Some(column))
        })
    }

    pub fn key_column(&self, table: &str) -> &str {
        self.table(table)
            .map(|t| t.key_column.as_str())
            .unwrap_or(DEFAULT_KEY_COLUMN)
    }

    /// Canonical text form; `load_config(cfg.render())` yields `cfg`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, table) in &self.tables {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{}]\n", toml_key(name)));
            out.push_str(&format!("key_column = {}\n", toml_str(&table.key_column)));
            let enc: Vec<String> = table
                .columns
                .iter()
                .filter(|c| c.encrypted)
                .map(|c| toml_str(&c.column))
                .collect();
            out.push_str(&format!("encrypted = [{}]\n", enc.join(", ")));
            for col in &table.columns {
                if let (Some(bits), Some(companion)) = (col.bidx_bits, &col.companion) {
                    let key = toml_key(&col.column);
                    out.push_str(&format!("blind_index.{key}.bits = {bits}\n"));
                    out.push_str(&format!(
                        "blind_index.{key}.companion = {}\n",
                        toml_str(companion)
                    ));
                }
            }
        }
        out
    }
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

fn toml_key(s: &str) -> String {
    if !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        s.to_owned()
    } else {
        toml_str(s)
    }
}
