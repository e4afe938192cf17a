//! Dataset generation, workload driver and report tooling for the blindex
//! proxy. The `blindex-bench` binary is a thin CLI over this crate.

use std::io;

use blindex_client::QueryOutcome;
use serde::{Deserialize, Serialize};

pub mod dataset;
pub mod report;
pub mod workload;

/// One measured operation, one CSV line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub workload: String,
    pub variant: String,
    pub rows: u64,
    pub rep: u32,
    pub micros: u64,
    /// Delta of the proxy's decryption counter. Empty when no stats
    /// endpoint was given.
    pub rows_decrypted: Option<u64>,
    pub bytes_clear: u64,
    pub bytes_enc: u64,
}

pub const CSV_HEADER: &str = "workload,variant,rows,rep,micros,rows_decrypted,bytes_clear,bytes_enc";

pub fn write_csv<W: io::Write>(out: W, records: &[Record]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> csv::Result<Vec<Record>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Size of a result set serialized as a JSON array of row objects.
/// Cells that parse as integers are written as numbers.
pub fn json_body_len(outcome: &QueryOutcome) -> u64 {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> = outcome
        .rows
        .iter()
        .map(|row| {
            outcome
                .columns
                .iter()
                .zip(row)
                .map(|(col, cell)| {
                    let v = match cell {
                        None => serde_json::Value::Null,
                        Some(s) => match s.parse::<i64>() {
                            Ok(n) => n.into(),
                            Err(_) => s.clone().into(),
                        },
                    };
                    (col.clone(), v)
                })
                .collect()
        })
        .collect();
    serde_json::to_vec(&rows).map_or(0, |b| b.len() as u64)
}
