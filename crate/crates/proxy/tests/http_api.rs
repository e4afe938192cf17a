mod common;

use blindex_client::{start_session, HttpClient};
use blindex_core::ErrorCode;
use common::*;

#[tokio::test]
async fn health_stats_and_encrypted_queries_over_http() {
    let h = Harness::with(Options {
        http: true,
        ..Options::default()
    })
    .await;
    h.create_patients().await;
    let addr = h.proxy.http_addr.unwrap().to_string();
    let mut http = HttpClient::new(&addr);
    assert!(http.health().await.unwrap());
    let before = http.stats().await.unwrap();
    assert_eq!(before.rows_decrypted, 0);

    let out = http.query("SELECT 1, 'two'").await.unwrap();
    assert_eq!(out.columns.len(), 2);
    assert_eq!(out.rows, vec![vec![Some("1".to_string()), Some("two".to_string())]]);

    let mut s = start_session(&mut http, &h.expected, &h.root).await.unwrap();
    s.register(&mut http, "web", "pw").await.unwrap();
    for i in 0..5 {
        let sql = insert_patient(&mut s, i, 1, &format!("N{i}"), &format!("000-00-000{i}"));
        assert_eq!(http.query(&sql).await.unwrap().affected, 1);
    }
    let sql = format!("SELECT name FROM patients WHERE ssn = {}", s.literal("000-00-0003").unwrap());
    let out = s.decrypt_outcome(http.query(&sql).await.unwrap()).unwrap();
    assert_eq!(out.rows, vec![vec![Some("N3".to_string())]]);

    let after = http.stats().await.unwrap();
    assert!(after.rows_decrypted >= 1 && after.rows_decrypted <= 5, "{after:?}");
    assert_eq!(after.rows_out, 1);

    // errors keep their codes
    let err = http
        .query("SELECT name FROM patients WHERE SESSION_ID(12345)")
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::SessionNotFound));
    let err = http.query("SELECT name FROM patients").await.unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::SessionUnresolvable));
}

#[tokio::test]
async fn http_status_codes() {
    let h = Harness::with(Options {
        http: true,
        ..Options::default()
    })
    .await;
    h.create_patients().await;
    let base = format!("http://{}", h.proxy.http_addr.unwrap());
    let web = reqwest::Client::new();
    let post = |sql: &str| {
        web.post(format!("{base}/query"))
            .json(&serde_json::json!({ "sql": sql }))
            .send()
    };
    assert_eq!(post("SELECT 1").await.unwrap().status(), 200);
    assert_eq!(
        post("SELECT name FROM patients WHERE SESSION_ID(1)").await.unwrap().status(),
        401
    );
    let resp = post("SELECT name FROM patients WHERE ssn = 'x' AND SESSION_ID(1)").await.unwrap();
    assert_eq!(resp.status(), 400);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["code"], "cleartext_filter_on_encrypted");
    let resp = web
        .post(format!("{base}/query"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_client_error());
    assert_eq!(web.get(format!("{base}/healthz")).send().await.unwrap().text().await.unwrap(), "ok");
}
