mod common;

use std::net::SocketAddr;
use std::sync::Arc;

use blindex_client::WireClient;
use common::*;
use parking_lot::Mutex;
use rand::distributions::{Alphanumeric, DistString};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

fn pump<R, W>(mut from: R, mut to: W, log: Arc<Mutex<Vec<u8>>>)
where
    R: tokio::io::AsyncRead + Send + Unpin + 'static,
    W: tokio::io::AsyncWrite + Send + Unpin + 'static,
{
    tokio::spawn(async move {
        let mut buf = [0u8; 8192];
        loop {
            let n = match from.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            log.lock().extend_from_slice(&buf[..n]);
            if to.write_all(&buf[..n]).await.is_err() {
                break;
            }
        }
    });
}

/// TCP relay in front of `target` that records every byte in both
/// directions.
async fn wire_tap(target: SocketAddr) -> (SocketAddr, Arc<Mutex<Vec<u8>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    tokio::spawn(async move {
        loop {
            let (client, _) = listener.accept().await.unwrap();
            let server = TcpStream::connect(target).await.unwrap();
            let (cr, cw) = client.into_split();
            let (sr, sw) = server.into_split();
            pump(cr, sw, log.clone());
            pump(sr, cw, log.clone());
        }
    });
    (addr, seen)
}

fn contains(haystack: &[u8], needle: &str) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle.as_bytes())
}

#[tokio::test]
async fn no_plaintext_reaches_storage_logs_or_the_wire() {
    let h = Harness::start().await;
    h.create_patients().await;
    let (tap, wire) = wire_tap(h.proxy.addr).await;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut secrets: Vec<String> = Vec::new();
    let mut rows = 0u32;

    for u in 0..4 {
        let password = format!("pw-{}", Alphanumeric.sample_string(&mut rng, 16));
        secrets.push(password.clone());
        let mut c = WireClient::connect(tap).await.unwrap();
        let mut s = h.session(&mut c).await;
        s.register(&mut c, &format!("clinic{u}"), &password).await.unwrap();
        let mut mine = Vec::new();
        for _ in 0..25 {
            rows += 1;
            let name = format!("Name{}", Alphanumeric.sample_string(&mut rng, 10));
            let ssn = format!(
                "{:03}-{:02}-{:04}",
                rng.gen_range(100..1000),
                rng.gen_range(10..100),
                rng.gen_range(1000..10_000)
            );
            c.query(&insert_patient(&mut s, rows, u, &name, &ssn)).await.unwrap();
            mine.push(ssn.clone());
            secrets.push(name);
            secrets.push(ssn);
        }
        for ssn in mine.iter().take(10) {
            let sql = format!("SELECT name, ssn FROM patients WHERE ssn = {}", s.literal(ssn).unwrap());
            let out = s.decrypt_outcome(c.query(&sql).await.unwrap()).unwrap();
            assert_eq!(out.rows[0][1].as_deref(), Some(ssn.as_str()));
        }
        let renamed = format!("Renamed{}", Alphanumeric.sample_string(&mut rng, 10));
        secrets.push(renamed.clone());
        let sql = format!(
            "UPDATE patients SET name = {} WHERE ssn = {}",
            s.literal(&renamed).unwrap(),
            s.literal(&mine[0]).unwrap()
        );
        assert_eq!(c.query(&sql).await.unwrap().affected, 1);
        // a second login on a fresh session
        let mut c2 = WireClient::connect(tap).await.unwrap();
        let mut s2 = h.session(&mut c2).await;
        s2.login(&mut c2, &format!("clinic{u}"), &password).await.unwrap();
    }

    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    let storage = h.db.storage_dump();
    let log = h.db.query_log().join("\n");
    let wire = wire.lock().clone();
    assert!(wire.len() > 10_000);
    // the scan itself can find things
    assert!(contains(&wire, "clinic0") && storage.contains("clinic0"));
    let mut hits = Vec::new();
    for secret in &secrets {
        if storage.contains(secret.as_str()) {
            hits.push(format!("storage: {secret}"));
        }
        if log.contains(secret.as_str()) {
            hits.push(format!("log: {secret}"));
        }
        if contains(&wire, secret) {
            hits.push(format!("wire: {secret}"));
        }
    }
    assert!(hits.is_empty(), "{hits:?}");
    assert_eq!(secrets.len(), 4 + 4 * 51);
}
