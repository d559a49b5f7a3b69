//! Routes under `/api/v1`.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use futures_util::stream::{self, Stream, StreamExt};
use monitomation_core::dtmf::pcm16_le_to_samples;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{mpsc, oneshot};

use crate::error::ApiError;
use crate::owner::{Envelope, Request, Shared};

/// Upper bound on records returned by one `GET /events`.
pub const MAX_PAGE: usize = 10_000;
const STREAM_BATCH: usize = 256;

#[derive(Clone)]
pub(crate) struct AppState {
    pub tx: mpsc::Sender<Envelope>,
    pub shared: Arc<Shared>,
}

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/messages", post(post_message))
        .route("/commands", post(post_command))
        .route("/dtmf", post(post_dtmf))
        .route("/nodes", get(get_nodes))
        .route("/nodes/{addr}", get(get_node))
        .route("/submissions/{id}", get(get_submission))
        .route("/events", get(get_events))
        .route("/events/stream", get(stream_events))
        .route("/sim", get(get_sim))
        .route("/sim/pause", post(sim_pause))
        .route("/sim/resume", post(sim_resume))
        .route("/sim/step", post(sim_step))
}

async fn call(state: &AppState, request: Request) -> Response {
    let (reply, rx) = oneshot::channel();
    if state.tx.send(Envelope { request, reply }).await.is_err() {
        return ApiError::unavailable("ShuttingDown", "engine is not running").into_response();
    }
    match rx.await {
        Ok(Ok((status, body))) => (status, Json(body)).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(_) => ApiError::unavailable("ShuttingDown", "engine is not running").into_response(),
    }
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(v)| v).map_err(|e| ApiError::malformed(e.body_text()))
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    #[serde(default)]
    to: Option<u16>,
    text: String,
}

async fn post_message(State(s): State<AppState>, b: Result<Json<MessageBody>, JsonRejection>) -> Response {
    match body(b) {
        Ok(m) => {
            call(
                &s,
                Request::Message {
                    to: m.to,
                    text: m.text,
                },
            )
            .await
        }
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct CommandBody {
    input: String,
}

async fn post_command(State(s): State<AppState>, b: Result<Json<CommandBody>, JsonRejection>) -> Response {
    match body(b) {
        Ok(c) => call(&s, Request::Command { input: c.input }).await,
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct DtmfBody {
    sample_rate: u32,
    pcm16_base64: String,
}

async fn post_dtmf(State(s): State<AppState>, b: Result<Json<DtmfBody>, JsonRejection>) -> Response {
    let d = match body(b) {
        Ok(d) => d,
        Err(e) => return e.into_response(),
    };
    let bytes = match base64::engine::general_purpose::STANDARD.decode(d.pcm16_base64.as_bytes()) {
        Ok(b) => b,
        Err(e) => return ApiError::malformed(format!("pcm16_base64: {e}")).into_response(),
    };
    let samples = match pcm16_le_to_samples(&bytes) {
        Ok(v) => v,
        Err(e) => {
            return ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.name(), e.to_string()).into_response()
        }
    };
    call(
        &s,
        Request::Dtmf {
            samples,
            sample_rate: d.sample_rate,
        },
    )
    .await
}

async fn get_nodes(State(s): State<AppState>) -> Response {
    call(&s, Request::Nodes).await
}

async fn get_node(State(s): State<AppState>, Path(addr): Path<u16>) -> Response {
    call(&s, Request::Node(addr)).await
}

async fn get_submission(State(s): State<AppState>, Path(id): Path<u64>) -> Response {
    call(&s, Request::Submission(id)).await
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    #[serde(default)]
    limit: Option<usize>,
}

/// `{"records": [...], "next_after": n, "total": len}`.
async fn get_events(State(s): State<AppState>, Query(q): Query<EventsQuery>) -> Response {
    let limit = q.limit.unwrap_or(MAX_PAGE).min(MAX_PAGE);
    let records = s.shared.page(q.after, limit);
    let next_after = records.last().map_or(q.after, |r| r.index);
    Json(json!({"records": records, "next_after": next_after, "total": s.shared.len()})).into_response()
}

/// Resume point: `Last-Event-ID` wins over `?after=`.
fn resume_offset(headers: &HeaderMap, q: &EventsQuery) -> u64 {
    headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(q.after)
}

async fn stream_events(
    State(s): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let after = resume_offset(&headers, &q);
    let rx = s.shared.latest.clone();
    let batches = stream::unfold((after, rx, s.shared), |(mut last, mut rx, shared)| async move {
        loop {
            rx.borrow_and_update();
            let batch = shared.page(last, STREAM_BATCH);
            if !batch.is_empty() {
                last += batch.len() as u64;
                return Some((batch, (last, rx, shared)));
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    });
    let events = batches.flat_map(|batch| {
        stream::iter(
            batch
                .into_iter()
                .map(|r| Ok(Event::default().id(r.index.to_string()).data(r.to_json()))),
        )
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

async fn get_sim(State(s): State<AppState>) -> Response {
    call(&s, Request::Status).await
}

async fn sim_pause(State(s): State<AppState>) -> Response {
    call(&s, Request::Pause).await
}

async fn sim_resume(State(s): State<AppState>) -> Response {
    call(&s, Request::Resume).await
}

async fn sim_step(State(s): State<AppState>) -> Response {
    call(&s, Request::Step).await
}
