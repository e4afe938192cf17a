//! HTTP/JSON front end: `GET /healthz`, `GET /stats`, `POST /query`.
//!
//! `/query` runs one statement on a fresh backend connection and returns the
//! whole result as JSON, so it suits short statements; the TCP protocol is
//! the streaming path.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use blindex_core::wire::{ErrorBody, QueryRequest, Request};
use blindex_core::{ErrorCode, ProxyError};

use crate::context::ProxyContext;
use crate::handler::ProxyHandler;
use crate::sink::CollectSink;

pub fn router(ctx: Arc<ProxyContext>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/stats", get(stats))
        .route("/query", post(query))
        .with_state(ctx)
}

async fn stats(State(ctx): State<Arc<ProxyContext>>) -> impl IntoResponse {
    Json(ctx.stats.snapshot())
}

fn status_for(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::BackendError => StatusCode::BAD_GATEWAY,
        ErrorCode::Internal | ErrorCode::AttestationFailed | ErrorCode::CounterExhausted => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        ErrorCode::SessionNotFound | ErrorCode::SessionExpired | ErrorCode::LoginFailed => {
            StatusCode::UNAUTHORIZED
        }
        _ => StatusCode::BAD_REQUEST,
    }
}

fn error_response(err: &ProxyError) -> Response {
    (status_for(err.code), Json(ErrorBody::from(err))).into_response()
}

async fn query(
    State(ctx): State<Arc<ProxyContext>>,
    Json(body): Json<QueryRequest>,
) -> Response {
    let mut handler = match ProxyHandler::open(ctx).await {
        Ok(h) => h,
        Err(e) => return error_response(&e),
    };
    let mut sink = CollectSink::default();
    if let Err(e) = handler.handle(Request::Query { sql: body.sql }, &mut sink).await {
        return error_response(&e);
    }
    match sink.into_result() {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => error_response(&e),
    }
}
