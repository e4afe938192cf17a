mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use async_trait::async_trait;
use blindex_client::ClientError;
use blindex_core::wire::Row;
use blindex_core::ProxyError;
use blindex_proxy::backend::{BackendConnection, BackendConnector, Exec};
use blindex_proxy::refdb::LocalConnection;
use blindex_proxy::ReferenceDb;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plaintext model of one user's rows: id -> (office, name, ssn).
type Oracle = BTreeMap<u32, (u32, String, String)>;

async fn user_workload(h: Arc<Harness>, user: usize) -> usize {
    let (mut c, mut s) = h.user(&format!("user{user}"), &format!("pw{user}")).await;
    let mut rng = ChaCha8Rng::seed_from_u64(user as u64);
    let mut oracle = Oracle::new();
    let mut checks = 0;
    for step in 0..12u32 {
        let id = user as u32 * 1000 + step;
        let office = rng.gen_range(1..4);
        let name = format!("n{user}-{step}");
        let ssn = format!("{:03}-{:02}-{:04}", user, step, rng.gen_range(0..10_000));
        c.query(&insert_patient(&mut s, id, office, &name, &ssn)).await.unwrap();
        oracle.insert(id, (office, name, ssn));

        // point lookup of a random earlier row by encrypted ssn
        let (&pick, (office, name, ssn)) = oracle.iter().nth(rng.gen_range(0..oracle.len())).unwrap();
        let sql = format!("SELECT id, doctorOfficeId, name FROM patients WHERE ssn = {}", s.literal(ssn).unwrap());
        let out = s.decrypt_outcome(c.query(&sql).await.unwrap()).unwrap();
        assert_eq!(
            out.rows,
            vec![vec![Some(pick.to_string()), Some(office.to_string()), Some(name.clone())]],
            "user {user}"
        );
        checks += 1;

        if step % 4 == 3 {
            let new_office = rng.gen_range(4..9);
            let sql = format!(
                "UPDATE patients SET doctorOfficeId = {new_office} WHERE ssn = {}",
                s.literal(ssn).unwrap()
            );
            assert_eq!(c.query(&sql).await.unwrap().affected, 1);
            oracle.get_mut(&pick).unwrap().0 = new_office;
        }
    }
    // full scan under this session: other users' rows fail authentication
    let sql = format!("SELECT id, doctorOfficeId, name, ssn FROM patients WHERE SESSION_ID({})", s.session_id());
    let out = s.decrypt_outcome(c.query(&sql).await.unwrap()).unwrap();
    let got: Oracle = out
        .rows
        .iter()
        .map(|r| {
            let v = |i: usize| r[i].clone().unwrap();
            (v(0).parse().unwrap(), (v(1).parse().unwrap(), v(2), v(3)))
        })
        .collect();
    assert_eq!(got, oracle, "user {user}");
    checks + 1
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn fifty_interleaved_sessions_match_their_oracles() {
    let h = Arc::new(Harness::start().await);
    h.create_patients().await;
    let tasks: Vec<_> = (0..50).map(|u| tokio::spawn(user_workload(h.clone(), u))).collect();
    let mut checks = 0;
    for t in tasks {
        checks += t.await.unwrap();
    }
    assert_eq!(checks, 50 * 13);
    assert_eq!(h.db.table_rows("patients").unwrap().1.len(), 600);
    assert_eq!(h.proxy.ctx.sessions.len(), 50);
}

const MARKER: &str = "inject_fault_here";

struct Faulty(LocalConnection);

#[async_trait]
impl BackendConnection for Faulty {
    async fn execute(&mut self, sql: &str) -> Result<Exec, ProxyError> {
        if sql.contains(MARKER) {
            panic!("injected fault");
        }
        self.0.execute(sql).await
    }
    async fn next_row(&mut self) -> Result<Option<Row>, ProxyError> {
        self.0.next_row().await
    }
    fn last_affected(&self) -> u64 {
        self.0.last_affected()
    }
    async fn begin(&mut self) -> Result<(), ProxyError> {
        self.0.begin().await
    }
    async fn commit(&mut self) -> Result<(), ProxyError> {
        self.0.commit().await
    }
    async fn rollback(&mut self) -> Result<(), ProxyError> {
        self.0.rollback().await
    }
}

struct FaultyConnector(ReferenceDb);

#[async_trait]
impl BackendConnector for FaultyConnector {
    async fn connect(&self) -> Result<Box<dyn BackendConnection>, ProxyError> {
        Ok(Box::new(Faulty(self.0.connect())))
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn a_crashing_handler_leaves_other_sessions_intact() {
    // the harness database is unused; the faulty connector wraps its own
    let db = ReferenceDb::new();
    let h = Arc::new(
        Harness::with(Options {
            backend: Some(Arc::new(FaultyConnector(db.clone()))),
            ..Options::default()
        })
        .await,
    );
    {
        let mut c = h.client().await;
        c.query(PATIENT_TABLE).await.unwrap();
    }

    let survivors: Vec<_> = (0..8)
        .map(|u| {
            let h = h.clone();
            tokio::spawn(async move {
                let (mut c, mut s) = h.user(&format!("s{u}"), "pw").await;
                for i in 0..20u32 {
                    let id = u * 100 + i;
                    let ssn = format!("{u:03}-00-{i:04}");
                    c.query(&insert_patient(&mut s, id, 1, &format!("name{id}"), &ssn)).await.unwrap();
                    let sql = format!("SELECT name FROM patients WHERE ssn = {}", s.literal(&ssn).unwrap());
                    let out = s.decrypt_outcome(c.query(&sql).await.unwrap()).unwrap();
                    assert_eq!(out.rows, vec![vec![Some(format!("name{id}"))]]);
                    tokio::task::yield_now().await;
                }
            })
        })
        .collect();

    // a victim opens a transaction, writes, then crashes its handler
    let (mut victim, mut vs) = h.user("victim", "pw").await;
    victim.begin().await.unwrap();
    victim
        .query(&insert_patient(&mut vs, 999_999, 1, "ghost", "999-99-9999"))
        .await
        .unwrap();
    let err = victim.query(&format!("SELECT {MARKER} FROM patients_x")).await.unwrap_err();
    assert!(matches!(err, ClientError::Closed | ClientError::Io(_)), "{err}");

    for t in survivors {
        t.await.unwrap();
    }
    let (_, rows) = db.table_rows("patients").unwrap();
    assert_eq!(rows.len(), 160);
    assert!(!rows.iter().any(|r| r[0].as_deref() == Some("999999")));

    // the proxy still accepts new work, including writes
    let (mut c, mut s) = h.user("late", "pw").await;
    c.query(&insert_patient(&mut s, 5000, 2, "late", "500-00-0000")).await.unwrap();
}
