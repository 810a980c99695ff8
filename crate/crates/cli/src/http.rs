//! JSON-over-HTTP service mirroring the command line.
//!
//! Handlers are stateless and call the same functions as the subcommands,
//! so a response body equals the command output for the same request.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};

use axum::body::Body;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Json, Query};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tokio_stream::wrappers::UnboundedReceiverStream;
use tokio_stream::StreamExt;
use tower_http::cors::CorsLayer;

use crate::api::{self, ApiError, ApiResult, ErrorKind, SimulateRequest, SimulateResponse};
use crate::render::{Document, Format};

/// Largest number of replicates one HTTP request may ask for.
pub const MAX_HTTP_REPS: u64 = 1_000_000;

pub fn router() -> Router {
    Router::new()
        .route("/solve", get(solve))
        .route("/curve", get(curve))
        .route("/tables", get(tables))
        .route("/simulate", post(simulate))
        .fallback(not_found)
        .layer(CorsLayer::permissive())
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router()).await
}

#[derive(Debug, Default, Deserialize)]
struct FormatQuery {
    #[serde(default)]
    format: Format,
}

#[derive(Debug, Default, Deserialize)]
struct StreamQuery {
    #[serde(default)]
    stream: bool,
}

fn status(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::InvalidRequest => StatusCode::BAD_REQUEST,
        ErrorKind::SolverFailure => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn error_response(e: &ApiError) -> Response {
    (status(e.kind), [(CONTENT_TYPE, "application/json")], e.to_json()).into_response()
}

fn document<D: Document>(result: ApiResult<D>, format: Format) -> Response {
    match result.and_then(|d| d.render(format)) {
        Ok(body) => ([(CONTENT_TYPE, format.content_type())], body).into_response(),
        Err(e) => error_response(&e),
    }
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::failure(format!("worker failed: {e}")))?
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| ApiError::invalid(e.body_text()))
}

async fn solve(q: Result<Query<api::SolveRequest>, QueryRejection>) -> Response {
    match query(q) {
        Ok(req) => document(blocking(move || api::solve(&req)).await, Format::Json),
        Err(e) => error_response(&e),
    }
}

async fn curve(
    fq: Result<Query<FormatQuery>, QueryRejection>,
    q: Result<Query<api::CurveRequest>, QueryRejection>,
) -> Response {
    match query(fq).and_then(|f| Ok((f.format, query(q)?))) {
        Ok((format, req)) => document(blocking(move || api::curve(&req)).await, format),
        Err(e) => error_response(&e),
    }
}

async fn tables(
    fq: Result<Query<FormatQuery>, QueryRejection>,
    q: Result<Query<api::TablesRequest>, QueryRejection>,
) -> Response {
    match query(fq).and_then(|f| Ok((f.format, query(q)?))) {
        Ok((format, req)) => document(blocking(move || api::tables(&req)).await, format),
        Err(e) => error_response(&e),
    }
}

/// One line of a streamed simulation response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamEvent {
    Progress { done: u64, reps: u64 },
    Result(SimulateResponse),
    Error(ApiError),
}

impl StreamEvent {
    fn line(&self) -> String {
        let mut s = serde_json::to_string(self).unwrap_or_else(|e| format!(r#"{{"error":"{e}"}}"#));
        s.push('\n');
        s
    }
}

async fn simulate(
    sq: Result<Query<StreamQuery>, QueryRejection>,
    body: Result<Json<SimulateRequest>, JsonRejection>,
) -> Response {
    let parsed = query(sq).and_then(|s| {
        let Json(req) = body.map_err(|e| ApiError::invalid(e.body_text()))?;
        if req.reps > MAX_HTTP_REPS {
            return Err(ApiError::invalid(format!("reps = {} exceeds the per-request limit {MAX_HTTP_REPS}", req.reps)));
        }
        Ok((s.stream, req))
    });
    match parsed {
        Ok((false, req)) => document(blocking(move || api::simulate(&req)).await, Format::Json),
        Ok((true, req)) => stream_simulation(req),
        Err(e) => error_response(&e),
    }
}

/// Newline-delimited JSON: progress events at whole-percent steps, then one
/// result or error event.
fn stream_simulation(req: SimulateRequest) -> Response {
    let (tx, rx) = mpsc::unbounded_channel::<String>();
    tokio::task::spawn_blocking(move || {
        let reps = req.reps;
        let last_percent = AtomicU64::new(0);
        let result = api::simulate_with_progress(&req, |done| {
            let percent = done * 100 / reps.max(1);
            if last_percent.fetch_max(percent, Ordering::Relaxed) < percent {
                let _ = tx.send(StreamEvent::Progress { done, reps }.line());
            }
        });
        let last = match result {
            Ok(r) => StreamEvent::Result(r),
            Err(e) => StreamEvent::Error(e),
        };
        let _ = tx.send(last.line());
    });
    let stream = UnboundedReceiverStream::new(rx).map(Ok::<_, Infallible>);
    ([(CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response()
}

async fn not_found() -> Response {
    let e = ApiError::invalid("unknown endpoint; use GET /solve, /curve, /tables or POST /simulate");
    (StatusCode::NOT_FOUND, [(CONTENT_TYPE, "application/json")], e.to_json()).into_response()
}
