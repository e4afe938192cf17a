mod common;

use blindex_proxy::server::start_refdb;
use blindex_proxy::ReferenceDb;
use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

/// Sends one query and returns the raw response lines up to `done`/`error`.
struct Raw {
    reader: BufReader<tokio::net::tcp::OwnedReadHalf>,
    writer: tokio::net::tcp::OwnedWriteHalf,
}

impl Raw {
    async fn connect(addr: std::net::SocketAddr) -> Self {
        let (r, w) = TcpStream::connect(addr).await.unwrap().into_split();
        Self {
            reader: BufReader::new(r),
            writer: w,
        }
    }

    async fn exchange(&mut self, sql: &str) -> Vec<String> {
        let line = serde_json::json!({ "type": "query", "sql": sql }).to_string() + "\n";
        self.writer.write_all(line.as_bytes()).await.unwrap();
        let mut out = Vec::new();
        loop {
            let mut l = String::new();
            assert!(self.reader.read_line(&mut l).await.unwrap() > 0, "closed");
            let end = l.contains(r#""type":"done""#) || l.contains(r#""type":"error""#);
            out.push(l);
            if end {
                return out;
            }
        }
    }
}

fn corpus(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["House", "Grey", "Quinn", "Who", "Zhivago", "O'Neil", "Strange", "Watson"];
    let mut q = vec![
        "CREATE TABLE doctors (id INT PRIMARY KEY, name TEXT, office INT, rating INT)".to_string(),
        PATIENT_TABLE.to_string(),
    ];
    for id in 1..=24 {
        let name = names.choose(&mut rng).unwrap().replace('\'', "''");
        q.push(format!(
            "INSERT INTO doctors (id, name, office, rating) VALUES ({id}, '{name}', {}, {})",
            rng.gen_range(1..5),
            rng.gen_range(0..100)
        ));
    }
    q.push("INSERT INTO doctors (id, name, office, rating) VALUES (3, 'dup', 1, 1)".into());
    while q.len() < 100 {
        let office = rng.gen_range(1..6);
        let id = rng.gen_range(0..30);
        let name = names.choose(&mut rng).unwrap().replace('\'', "''");
        let sql = match rng.gen_range(0..16) {
            0 => format!("SELECT * FROM doctors WHERE office = {office}"),
            1 => format!("SELECT id, name FROM doctors WHERE rating > {} LIMIT 3", rng.gen_range(0..100)),
            2 => format!("SELECT name FROM doctors WHERE name LIKE '{}%'", &name[..1]),
            3 => format!("SELECT COUNT(*), AVG(rating), MAX(id) FROM doctors WHERE office = {office}"),
            4 => format!("SELECT id FROM doctors WHERE id IN ({id}, {}, {})", id + 1, id + 7),
            5 => format!("UPDATE doctors SET rating = {} WHERE office = {office}", rng.gen_range(0..100)),
            6 => format!("DELETE FROM doctors WHERE id = {id}"),
            7 => format!("SELECT id, doctorOfficeId FROM patients WHERE doctorOfficeId = {office}"),
            8 => format!("SELECT name FROM doctors WHERE id = {id} AND office <> {office}"),
            9 => format!("SELECT * FROM doctors LIMIT 5 OFFSET {}", rng.gen_range(0..10)),
            10 => format!("SELECT 1, 'x', {id}"),
            11 => "SELECT nonexistent FROM doctors".to_string(),
            12 => format!("SELECT * FROM doctors WHERE name = '{name}' AND rating >= 50"),
            13 => "SELECT MIN(name), SUM(office) FROM doctors".to_string(),
            14 => format!("SELECT * FROM missing_table WHERE id = {id}"),
            _ => format!("SELECT id, rating FROM doctors WHERE rating <= {}", rng.gen_range(0..100)),
        };
        q.push(sql);
    }
    q
}

#[tokio::test]
async fn passthrough_is_byte_identical_to_the_backend() {
    let h = Harness::start().await;
    let direct_db = ReferenceDb::new();
    let (direct_addr, _task) = start_refdb(direct_db.clone(), "127.0.0.1:0").await.unwrap();
    let mut proxied = Raw::connect(h.proxy.addr).await;
    let mut direct = Raw::connect(direct_addr).await;

    let queries = corpus(0xb1d);
    assert_eq!(queries.len(), 100);
    let mut rows_seen = 0;
    let mut errors_seen = 0;
    for sql in &queries {
        let a = proxied.exchange(sql).await;
        let b = direct.exchange(sql).await;
        assert_eq!(a, b, "{sql}");
        rows_seen += a.iter().filter(|l| l.contains(r#""type":"row""#)).count();
        errors_seen += a.iter().filter(|l| l.contains(r#""type":"error""#)).count();
    }
    // the corpus exercises both results and failures
    assert!(rows_seen > 100, "{rows_seen}");
    assert!(errors_seen > 0);
    assert_eq!(h.db.query_log(), direct_db.query_log());
    assert_eq!(h.proxy.ctx.stats.snapshot().rows_in, 0);
}
