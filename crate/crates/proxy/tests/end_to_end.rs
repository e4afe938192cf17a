mod common;

use std::time::Duration;

use base64::Engine;
use blindex_client::{ClientError, Transport};
use blindex_core::ErrorCode;
use common::*;

fn code(err: ClientError) -> ErrorCode {
    err.code().unwrap_or_else(|| panic!("not a server error: {err}"))
}

#[tokio::test]
async fn register_write_and_read_back_under_a_new_session() {
    let h = Harness::start().await;
    h.create_patients().await;
    let (mut c, mut s) = h.user("alice", "correct horse").await;
    for (id, name, ssn) in [(1, "Ada", "123-45-6789"), (2, "Bob", "987-65-4321"), (3, "Cy", "555-00-1111")] {
        let out = c.query(&insert_patient(&mut s, id, 10 + id, name, ssn)).await.unwrap();
        assert_eq!(out.affected, 1);
    }
    let sql = format!("SELECT id, name, ssn FROM patients WHERE SESSION_ID({})", s.session_id());
    let out = s.decrypt_outcome(c.query(&sql).await.unwrap()).unwrap();
    assert_eq!(out.columns, ["id", "name", "ssn"]);
    assert_eq!(out.rows.len(), 3);
    assert_eq!(out.rows[1], [Some("2".into()), Some("Bob".into()), Some("987-65-4321".into())]);

    // stored cells are neither plaintext nor the client's envelopes
    let (_, rows) = h.db.table_rows("patients").unwrap();
    for row in &rows {
        let name = row[2].as_deref().unwrap();
        assert!(!["Ada", "Bob", "Cy"].contains(&name));
        let raw = base64::engine::general_purpose::STANDARD.decode(name).unwrap();
        assert_eq!(raw[0], 0x01);
        assert_eq!(row[4].as_deref().unwrap().len(), 4);
    }

    // a fresh connection and session, logged in with the same password
    let mut c2 = h.client().await;
    let mut s2 = h.session(&mut c2).await;
    assert_ne!(s2.session_id(), s.session_id());
    s2.login(&mut c2, "alice", "correct horse").await.unwrap();
    let sql = format!("SELECT name, doctorOfficeId FROM patients WHERE ssn = {}", s2.literal("555-00-1111").unwrap());
    let out = s2.decrypt_outcome(c2.query(&sql).await.unwrap()).unwrap();
    assert_eq!(out.rows, vec![vec![Some("Cy".to_string()), Some("13".to_string())]]);
    assert_eq!(out.columns, ["name", "doctorOfficeId"]);
}

#[tokio::test]
async fn login_failures_look_the_same() {
    let h = Harness::start().await;
    let (_c, _s) = h.user("alice", "pw-1").await;

    let mut c = h.client().await;
    let mut s = h.session(&mut c).await;
    let wrong = s.login(&mut c, "alice", "pw-2").await.unwrap_err();
    let unknown = s.login(&mut c, "mallory", "pw-1").await.unwrap_err();
    let (wrong, unknown) = match (wrong, unknown) {
        (ClientError::Server(a), ClientError::Server(b)) => (a, b),
        other => panic!("{other:?}"),
    };
    assert_eq!(wrong.code, ErrorCode::LoginFailed);
    assert_eq!(wrong, unknown);

    let dup = s.register(&mut c, "alice", "other").await.unwrap_err();
    assert_eq!(code(dup), ErrorCode::DuplicateUser);

    // not logged in yet
    let sql = format!("SELECT name FROM patients WHERE SESSION_ID({})", s.session_id());
    h.create_patients().await;
    assert_eq!(code(c.query(&sql).await.unwrap_err()), ErrorCode::NotLoggedIn);
    s.login(&mut c, "alice", "pw-1").await.unwrap();
    assert!(c.query(&sql).await.unwrap().rows.is_empty());
}

#[tokio::test]
async fn users_cannot_read_each_others_rows() {
    let h = Harness::start().await;
    h.create_patients().await;
    let (mut a, mut sa) = h.user("alice", "a").await;
    let (mut b, mut sb) = h.user("bob", "b").await;
    a.query(&insert_patient(&mut sa, 1, 1, "Ada", "111-11-1111")).await.unwrap();
    b.query(&insert_patient(&mut sb, 2, 1, "Bea", "222-22-2222")).await.unwrap();

    let sql = format!("SELECT id, name FROM patients WHERE SESSION_ID({})", sb.session_id());
    let out = sb.decrypt_outcome(b.query(&sql).await.unwrap()).unwrap();
    assert_eq!(out.rows, vec![vec![Some("2".to_string()), Some("Bea".to_string())]]);

    let sql = format!("SELECT id FROM patients WHERE ssn = {}", sb.literal("111-11-1111").unwrap());
    assert!(b.query(&sql).await.unwrap().rows.is_empty());
    assert!(h.proxy.ctx.stats.snapshot().auth_drops >= 1);
}

#[tokio::test]
async fn update_by_encrypted_filter_is_split() {
    let h = Harness::start().await;
    h.create_patients().await;
    let (mut c, mut s) = h.user("alice", "pw").await;
    c.query(&insert_patient(&mut s, 1, 1, "Ada", "123-45-6789")).await.unwrap();
    c.query(&insert_patient(&mut s, 2, 1, "Bob", "987-65-4321")).await.unwrap();
    h.db.clear_log();

    let sql = format!(
        "UPDATE patients SET doctorOfficeId = 7 WHERE ssn = {}",
        s.literal("987-65-4321").unwrap()
    );
    assert_eq!(c.query(&sql).await.unwrap().affected, 1);
    let log = h.db.query_log();
    assert_eq!(log.len(), 4, "{log:?}");
    assert_eq!(log[0], "BEGIN");
    assert!(log[1].starts_with("SELECT id, ssn FROM patients WHERE ssn__bidx = '"), "{}", log[1]);
    assert_eq!(log[2], "UPDATE patients SET doctorOfficeId = 7 WHERE id IN (2)");
    assert_eq!(log[3], "COMMIT");

    // encrypted assignment with an encrypted filter
    let sql = format!(
        "UPDATE patients SET name = {} WHERE ssn = {}",
        s.literal("Robert").unwrap(),
        s.literal("987-65-4321").unwrap()
    );
    assert_eq!(c.query(&sql).await.unwrap().affected, 1);
    let sql = format!("SELECT name, doctorOfficeId FROM patients WHERE id = 2 AND SESSION_ID({})", s.session_id());
    let out = s.decrypt_outcome(c.query(&sql).await.unwrap()).unwrap();
    assert_eq!(out.rows, vec![vec![Some("Robert".to_string()), Some("7".to_string())]]);

    // no match: the write is skipped
    h.db.clear_log();
    let sql = format!("DELETE FROM patients WHERE ssn = {}", s.literal("000-00-0000").unwrap());
    assert_eq!(c.query(&sql).await.unwrap().affected, 0);
    assert!(!h.db.query_log().iter().any(|q| q.starts_with("DELETE")));

    let sql = format!("DELETE FROM patients WHERE ssn = {}", s.literal("123-45-6789").unwrap());
    assert_eq!(c.query(&sql).await.unwrap().affected, 1);
    assert_eq!(h.db.table_rows("patients").unwrap().1.len(), 1);
}

#[tokio::test]
async fn split_inside_client_transaction_uses_it() {
    let h = Harness::start().await;
    h.create_patients().await;
    let (mut c, mut s) = h.user("alice", "pw").await;
    c.query(&insert_patient(&mut s, 1, 1, "Ada", "123-45-6789")).await.unwrap();
    h.db.clear_log();

    c.begin().await.unwrap();
    let sql = format!("UPDATE patients SET doctorOfficeId = 3 WHERE ssn = {}", s.literal("123-45-6789").unwrap());
    assert_eq!(c.query(&sql).await.unwrap().affected, 1);
    c.rollback().await.unwrap();
    let log = h.db.query_log();
    assert_eq!(log.iter().filter(|q| *q == "BEGIN").count(), 1, "{log:?}");
    assert_eq!(log.last().unwrap(), "ROLLBACK");
    let (_, rows) = h.db.table_rows("patients").unwrap();
    assert_eq!(rows[0][1].as_deref(), Some("1"));
}

#[tokio::test]
async fn in_lists_limits_and_nulls() {
    let h = Harness::start().await;
    h.create_patients().await;
    let (mut c, mut s) = h.user("alice", "pw").await;
    for id in 1..=6 {
        let ssn = format!("100-00-000{}", id % 3);
        c.query(&insert_patient(&mut s, id, id, &format!("P{id}"), &ssn)).await.unwrap();
    }
    c.query(&format!(
        "INSERT INTO patients (id, doctorOfficeId, name, ssn) VALUES (7, 7, {}, NULL)",
        s.literal("P7").unwrap()
    ))
    .await
    .unwrap();

    let sql = format!(
        "SELECT id FROM patients WHERE ssn IN ({}, {}) LIMIT 3 OFFSET 1",
        s.literal("100-00-0001").unwrap(),
        s.literal("100-00-0002").unwrap()
    );
    let out = c.query(&sql).await.unwrap();
    let ids: Vec<_> = out.rows.iter().map(|r| r[0].clone().unwrap()).collect();
    assert_eq!(ids, ["2", "4", "5"]);

    let sql = format!("SELECT name, ssn FROM patients WHERE id = 7 AND SESSION_ID({})", s.session_id());
    let out = s.decrypt_outcome(c.query(&sql).await.unwrap()).unwrap();
    assert_eq!(out.rows, vec![vec![Some("P7".to_string()), None]]);
}

#[tokio::test]
async fn error_codes_are_distinct() {
    let h = Harness::start().await;
    h.create_patients().await;
    let (mut c, mut s) = h.user("alice", "pw").await;
    let sid = s.session_id();
    let env = s.literal("123-45-6789").unwrap();
    let cases = [
        ("SELECT name FROM patients WHERE ssn = '123-45-6789' AND SESSION_ID(1)".to_string(), ErrorCode::CleartextFilterOnEncrypted),
        (format!("SELECT COUNT(*) FROM patients WHERE ssn = {env}"), ErrorCode::AggregationOverEncrypted),
        (format!("SELECT name FROM patients WHERE ssn > {env}"), ErrorCode::UnsupportedPredicate),
        ("SELECT name FROM patients".to_string(), ErrorCode::SessionUnresolvable),
        (format!("SELECT name FROM patients WHERE SESSION_ID({})", sid ^ 1), ErrorCode::SessionNotFound),
        ("SELEC 1".to_string(), ErrorCode::UnsupportedStatement),
    ];
    let mut seen = Vec::new();
    for (sql, want) in cases {
        let got = code(c.query(&sql).await.unwrap_err());
        assert_eq!(got, want, "{sql}");
        seen.push(got);
    }
    // the connection survives every error
    let out = c.query("SELECT 1").await.unwrap();
    assert_eq!(out.rows, vec![vec![Some("1".to_string())]]);
    seen.dedup();
    assert_eq!(seen.len(), 6);
}

#[tokio::test]
async fn expired_sessions_are_reported() {
    let h = Harness::with(Options {
        ttl: Duration::from_millis(300),
        ..Options::default()
    })
    .await;
    h.create_patients().await;
    let (mut c, s) = h.user("alice", "pw").await;
    let sql = format!("SELECT name FROM patients WHERE SESSION_ID({})", s.session_id());
    c.query(&sql).await.unwrap();
    tokio::time::sleep(Duration::from_millis(700)).await;
    assert_eq!(code(c.query(&sql).await.unwrap_err()), ErrorCode::SessionExpired);
    assert_eq!(h.proxy.ctx.sessions.len(), 0);
}

#[tokio::test]
async fn bad_key_exchange_leaves_no_session() {
    let h = Harness::start().await;
    let mut c = h.client().await;
    let mut payload = vec![7u8; 32];
    // SEC1 uncompressed point with x = y = 1, not on P-256
    payload.push(0x04);
    payload.extend_from_slice(&[0u8; 31]);
    payload.push(1);
    payload.extend_from_slice(&[0u8; 31]);
    payload.push(1);
    let b64 = base64::engine::general_purpose::STANDARD.encode(&payload);
    let err = c.query(&format!("SELECT KEY_EXCHANGE('{b64}')")).await.unwrap_err();
    assert!(err.code().is_some(), "{err}");
    let err = c.query("SELECT KEY_EXCHANGE('AAAA')").await.unwrap_err();
    assert_eq!(code(err), ErrorCode::MalformedPayload);
    assert!(h.proxy.ctx.sessions.is_empty());

    // an honest one still works on the same connection
    let s = h.session(&mut c).await;
    assert!(s.is_verified());
    assert_eq!(h.proxy.ctx.sessions.len(), 1);
}

#[tokio::test]
async fn many_wrong_passwords_all_fail() {
    let h = Harness::start().await;
    let (_c, _s) = h.user("alice", "the real one").await;
    let mut c = h.client().await;
    let mut s = h.session(&mut c).await;
    for i in 0..40 {
        let err = s.login(&mut c, "alice", &format!("guess-{i}")).await.unwrap_err();
        assert_eq!(code(err), ErrorCode::LoginFailed);
    }
    s.login(&mut c, "alice", "the real one").await.unwrap();
}

#[tokio::test]
async fn transport_trait_works_through_boxes() {
    let h = Harness::start().await;
    let mut boxed: Box<dyn Transport> = Box::new(h.client().await);
    let s = blindex_client::start_session(&mut boxed, &h.expected, &h.root).await.unwrap();
    assert!(s.session_id() != 0);
}
