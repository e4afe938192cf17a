use std::collections::HashSet;
use std::process::Command;

use blindex_bench::workload::{self, RunOptions, Target, Variant, WorkloadKind};
use blindex_bench::{dataset, read_csv};
use blindex_core::attestation::SimulatedSigner;
use blindex_core::crypto::ArgonParams;
use blindex_core::schema::load_config;
use blindex_proxy::server::start_refdb;
use blindex_proxy::{default_measurement, start_proxy, Attester, ProxyContext, ReferenceDb};

async fn target(rows: u64) -> (Target, ReferenceDb) {
    let db = ReferenceDb::new();
    let (backend, _) = start_refdb(db.clone(), "127.0.0.1:0").await.unwrap();
    let signer = SimulatedSigner::generate(b"driver tests");
    let root = signer.root().clone();
    let ctx = ProxyContext::builder(
        load_config(&dataset::schema_toml(rows)).unwrap(),
        Attester::simulated(signer),
        db.connector(),
    )
    .argon_params(ArgonParams::MINIMAL)
    .build();
    let proxy = start_proxy(ctx, "127.0.0.1:0", Some("127.0.0.1:0")).await.unwrap();
    let t = Target {
        proxy: proxy.addr.to_string(),
        backend: backend.to_string(),
        stats: proxy.http_addr.map(|a| a.to_string()),
        expected: HashSet::from([default_measurement()]),
        root: Some(root),
        user: "bench".into(),
        password: "bench".into(),
    };
    std::mem::forget(proxy);
    (t, db)
}

#[tokio::test(flavor = "multi_thread")]
async fn parallel_sessions_number_their_reps() {
    let (t, db) = target(300).await;
    let opts = RunOptions {
        rows: 300,
        reps: 4,
        parallel: 3,
        ..RunOptions::default()
    };
    let recs = workload::run(&t, WorkloadKind::InsertOne, Variant::E2e, &opts).await.unwrap();
    assert_eq!(recs.len(), 12);
    let reps: HashSet<u32> = recs.iter().map(|r| r.rep).collect();
    assert_eq!(reps, (0..12).collect());
    assert!(recs.iter().all(|r| r.rows == 300 && r.workload == "insert_one"));
    // inserted rows are cleaned up again
    assert_eq!(db.table_rows("patients").unwrap().1.len(), 300);

    let recs = workload::run(&t, WorkloadKind::SelectById, Variant::Cleartext, &opts).await.unwrap();
    assert!(recs.iter().all(|r| r.bytes_clear == r.bytes_enc));
}

#[tokio::test(flavor = "multi_thread")]
async fn sweep_labels_and_byte_counts() {
    let (t, _db) = target(200).await;
    let opts = RunOptions {
        rows: 200,
        reps: 1,
        datasizes: vec![10, 500],
        sweep_n: 20,
        ..RunOptions::default()
    };
    let recs = workload::run(&t, WorkloadKind::DatasizeSweep, Variant::E2eNoDecrypt, &opts).await.unwrap();
    let labels: Vec<&str> = recs.iter().map(|r| r.workload.as_str()).collect();
    assert_eq!(labels, ["datasize_sweep@10", "datasize_sweep@500"]);
    assert!(recs.iter().all(|r| r.rows == 20 && r.rows_decrypted == Some(20)));
    // bigger names, more bytes, smaller relative overhead
    assert!(recs[1].bytes_clear > recs[0].bytes_clear * 5);
    let ratio = |i: usize| recs[i].bytes_enc as f64 / recs[i].bytes_clear as f64;
    assert!(ratio(1) < ratio(0));
}

#[test]
fn cli_exits_nonzero_without_a_proxy() {
    let out = Command::new(env!("CARGO_BIN_EXE_blindex-bench"))
        .args(["--proxy", "127.0.0.1:1", "--variant", "cleartext", "--rows", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("127.0.0.1:1"));
}

#[test]
fn cli_schema_and_report() {
    let exe = env!("CARGO_BIN_EXE_blindex-bench");
    let out = Command::new(exe).args(["schema", "--rows", "10000"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("blind_index.ssn.bits = 13"));

    let dir = std::env::temp_dir().join(format!("blindex-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("m.csv");
    std::fs::write(
        &csv,
        "workload,variant,rows,rep,micros,rows_decrypted,bytes_clear,bytes_enc\n\
         select_n,e2e,1,0,110,1,60,150\n\
         select_n,e2e,10,0,200,10,600,1500\n\
         select_n,e2e,100,0,1100,100,6000,15000\n",
    )
    .unwrap();
    assert_eq!(read_csv(std::fs::File::open(&csv).unwrap()).unwrap().len(), 3);
    let out = Command::new(exe).args(["report", "--in"]).arg(&csv).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("10.0000x+100.0 (R2 1.0000)"), "{text}");
    assert!(text.contains("2.500"), "{text}");
    std::fs::remove_dir_all(&dir).ok();
}
