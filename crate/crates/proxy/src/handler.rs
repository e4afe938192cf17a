//! Per-connection statement dispatch.

use std::sync::Arc;

use async_trait::async_trait;
use blindex_core::pipeline::{NoSealer, RowProcessor, SessionSealer, Step};
use blindex_core::sql::{
    analyze, rewrite, Analyzed, Literal, PlanClass, Procedure, QueryPlan, SessionKeys, Statement,
    TxnControl, UpdateSplit,
};
use blindex_core::wire::{Request, Response};
use blindex_core::{ErrorCode, ProxyError};

use crate::backend::{relay, BackendConnection, Exec};
use crate::context::ProxyContext;
use crate::procedures;
use crate::sink::ResponseSink;

/// Remembers whether the client side of the sink has failed, which ends the
/// connection rather than producing an `error` message.
struct Tracked<'a> {
    inner: &'a mut dyn ResponseSink,
    failed: Option<ProxyError>,
}

#[async_trait]
impl ResponseSink for Tracked<'_> {
    async fn send(&mut self, msg: Response) -> Result<(), ProxyError> {
        let result = self.inner.send(msg).await;
        if let Err(e) = &result {
            self.failed.get_or_insert_with(|| e.clone());
        }
        result
    }
}

pub struct ProxyHandler {
    ctx: Arc<ProxyContext>,
    backend: Box<dyn BackendConnection>,
    in_txn: bool,
}

impl ProxyHandler {
    /// Opens the backend connection this handler will own.
    pub async fn open(ctx: Arc<ProxyContext>) -> Result<Self, ProxyError> {
        let backend = ctx.backend.connect().await?;
        Ok(Self {
            ctx,
            backend,
            in_txn: false,
        })
    }

    /// Answers one request. Statement failures become `error` messages; an
    /// `Err` means the client can no longer be written to.
    pub async fn handle(
        &mut self,
        request: Request,
        sink: &mut dyn ResponseSink,
    ) -> Result<(), ProxyError> {
        let mut tracked = Tracked {
            inner: sink,
            failed: None,
        };
        let result = match request {
            Request::Query { sql } => self.query(&sql, &mut tracked).await,
            Request::Begin => self.control(TxnControl::Begin, &mut tracked).await,
            Request::Commit => self.control(TxnControl::Commit, &mut tracked).await,
            Request::Rollback => self.control(TxnControl::Rollback, &mut tracked).await,
        };
        if let Some(e) = tracked.failed {
            return Err(e);
        }
        if let Err(err) = result {
            let _ = self.backend.discard().await;
            tracing::debug!(code = %err.code, "statement failed");
            tracked.inner.send(Response::error(&err)).await?;
        }
        Ok(())
    }

    async fn control(
        &mut self,
        control: TxnControl,
        sink: &mut dyn ResponseSink,
    ) -> Result<(), ProxyError> {
        match control {
            TxnControl::Begin => self.backend.begin().await?,
            TxnControl::Commit => self.backend.commit().await?,
            TxnControl::Rollback => self.backend.rollback().await?,
        }
        self.in_txn = control == TxnControl::Begin;
        sink.send(Response::Done { affected: 0 }).await
    }

    async fn query(&mut self, sql: &str, sink: &mut dyn ResponseSink) -> Result<(), ProxyError> {
        let analyzed = analyze(sql, &self.ctx.schema)?;
        match analyzed.class {
            PlanClass::Passthrough => {
                let control = match &analyzed.stmt {
                    Statement::Transaction(c) => Some(*c),
                    _ => None,
                };
                relay(self.backend.as_mut(), sql, sink).await?;
                if let Some(c) = control {
                    self.in_txn = c == TxnControl::Begin;
                }
                Ok(())
            }
            PlanClass::CustomProcedure => self.procedure(analyzed, sink).await,
            PlanClass::Rewrite => self.rewritten(analyzed, sink).await,
        }
    }

    async fn procedure(
        &mut self,
        analyzed: Analyzed,
        sink: &mut dyn ResponseSink,
    ) -> Result<(), ProxyError> {
        let Statement::Call(call) = analyzed.stmt else {
            return Err(ProxyError::new(ErrorCode::Internal, "procedure plan without call"));
        };
        let ctx = self.ctx.clone();
        let value = match &call {
            Procedure::KeyExchange { payload } => procedures::key_exchange(&ctx, payload)?,
            Procedure::Register {
                username,
                envelope,
                session_id,
            } => {
                procedures::register(&ctx, self.backend.as_mut(), username, envelope, *session_id)
                    .await?
            }
            Procedure::Login {
                username,
                envelope,
                session_id,
            } => {
                procedures::login(&ctx, self.backend.as_mut(), username, envelope, *session_id)
                    .await?
            }
        };
        sink.send(Response::Columns {
            names: vec![call.name().to_owned()],
        })
        .await?;
        sink.send(Response::Row {
            values: vec![Some(value)],
        })
        .await?;
        sink.send(Response::Done { affected: 1 }).await
    }

    async fn rewritten(
        &mut self,
        analyzed: Analyzed,
        sink: &mut dyn ResponseSink,
    ) -> Result<(), ProxyError> {
        let Some(session_id) = analyzed.session_id else {
            return Err(ProxyError::new(
                ErrorCode::SessionUnresolvable,
                "statement carries no session id",
            ));
        };
        let ctx = self.ctx.clone();
        let session = ctx.sessions.lookup(session_id)?;
        // held for the whole statement: responses for one session are
        // sealed in counter order
        let mut state = session.state.lock().await;
        let ltk = state.ltk.clone();
        let keys = SessionKeys {
            session_id,
            c2p: &session.c2p,
            ltk: ltk.as_ref(),
        };
        let plan = rewrite(analyzed, &ctx.schema, Some(&keys))?;

        if let Some(split) = &plan.update_split {
            drop(state);
            return self.split_write(&plan, split, ltk.as_ref(), sink).await;
        }
        match self.backend.execute(&plan.rewritten_sql).await? {
            Exec::Done(affected) => sink.send(Response::Done { affected }).await,
            Exec::Rows(columns) => {
                let mut processor =
                    RowProcessor::new(&plan, &ctx.schema, ltk.as_ref(), &columns, ctx.stats.clone())?;
                sink.send(Response::Columns {
                    names: processor.columns().to_vec(),
                })
                .await?;
                let mut emitted = 0u64;
                loop {
                    if processor.is_done() {
                        self.backend.discard().await?;
                        break;
                    }
                    let Some(row) = self.backend.next_row().await? else {
                        break;
                    };
                    let mut sealer = SessionSealer {
                        state: &mut state.p2c,
                        session_id,
                    };
                    match processor.process(row, &mut sealer)? {
                        Step::Emit(values) => {
                            sink.send(Response::Row { values }).await?;
                            emitted += 1;
                        }
                        Step::Skip => {}
                        Step::Stop => {
                            self.backend.discard().await?;
                            break;
                        }
                    }
                }
                sink.send(Response::Done { affected: emitted }).await
            }
        }
    }

    /// UPDATE or DELETE filtered on encrypted columns: select candidate
    /// keys, re-check them on plaintext, then write by key, all inside one
    /// transaction.
    async fn split_write(
        &mut self,
        plan: &QueryPlan,
        split: &UpdateSplit,
        ltk: Option<&blindex_core::crypto::SymmetricKey>,
        sink: &mut dyn ResponseSink,
    ) -> Result<(), ProxyError> {
        let own_txn = !self.in_txn;
        if own_txn {
            self.backend.begin().await?;
        }
        let result = self.split_steps(plan, split, ltk).await;
        match result {
            Ok(affected) => {
                if own_txn {
                    self.backend.commit().await?;
                }
                sink.send(Response::Done { affected }).await
            }
            Err(e) => {
                if own_txn {
                    let _ = self.backend.discard().await;
                    let _ = self.backend.rollback().await;
                }
                Err(e)
            }
        }
    }

    async fn split_steps(
        &mut self,
        plan: &QueryPlan,
        split: &UpdateSplit,
        ltk: Option<&blindex_core::crypto::SymmetricKey>,
    ) -> Result<u64, ProxyError> {
        let ctx = self.ctx.clone();
        let mut keys = Vec::new();
        if let Exec::Rows(columns) = self.backend.execute(&split.select_ids_sql).await? {
            let mut processor =
                RowProcessor::new(plan, &ctx.schema, ltk, &columns, ctx.stats.clone())?;
            while let Some(row) = self.backend.next_row().await? {
                if let Step::Emit(out) = processor.process(row, &mut NoSealer)? {
                    keys.push(Literal::from_cell(out[0].as_deref()));
                }
            }
        }
        let Some(sql) = split.write.render_for(&keys) else {
            return Ok(0);
        };
        match self.backend.execute(&sql).await? {
            Exec::Done(n) => Ok(n),
            Exec::Rows(_) => {
                self.backend.drain().await?;
                Ok(self.backend.last_affected())
            }
        }
    }
}
