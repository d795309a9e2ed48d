//! JSON-over-HTTP front end.
//!
//! | route | result |
//! |---|---|
//! | `POST /api/sessions` | create from a config, `{session_id}` |
//! | `GET /api/sessions/{id}` | the stored config |
//! | `GET /api/sessions/{id}/next?worker=W` | `{stimulus_id, images, index, total}`, 410 when done |
//! | `POST /api/sessions/{id}/labels` | `{worker, stimulus_id, response}` to `{progress, qualified}` |
//! | `GET /api/sessions/{id}/template` | `{values, trials_used, glyph}`, 409 until both cells fill |
//! | `GET /api/sessions/{id}/export` | the trial log as JSON Lines |
//!
//! Every error body is `{"status": <code>, "error": <message>}` plus any
//! detail fields.

use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::SessionConfig;
use crate::service::Service;
use crate::session::Response;
use crate::SessionError;

impl IntoResponse for SessionError {
    fn into_response(self) -> HttpResponse {
        let message = self.to_string();
        let (status, code, extra) = match self {
            SessionError::InvalidConfig(problems) => (StatusCode::BAD_REQUEST, "invalid_config", json!({ "problems": problems })),
            SessionError::Duplicate(_) => (StatusCode::CONFLICT, "duplicate", json!({})),
            SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", json!({})),
            SessionError::UnknownStimulus(_) => (StatusCode::CONFLICT, "unknown_stimulus", json!({})),
            SessionError::Complete => (StatusCode::GONE, "complete", json!({})),
            SessionError::NotReady { missing } => (StatusCode::CONFLICT, "not_ready", json!({ "missing": missing })),
            SessionError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "bad_request", json!({})),
            SessionError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage", json!({})),
        };
        let mut body = json!({ "status": code, "error": message });
        if let (Value::Object(body), Value::Object(extra)) = (&mut body, extra) {
            body.extend(extra);
        }
        (status, Json(body)).into_response()
    }
}

fn bad_request(e: impl std::fmt::Display) -> SessionError {
    SessionError::InvalidRequest(e.to_string())
}

type AppState = Arc<Service>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}", get(show))
        .route("/api/sessions/{id}/next", get(next))
        .route("/api/sessions/{id}/labels", post(label))
        .route("/api/sessions/{id}/template", get(template))
        .route("/api/sessions/{id}/export", get(export))
        .with_state(service)
}

async fn create(
    State(service): State<AppState>,
    body: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<impl IntoResponse, SessionError> {
    let Json(config) = body.map_err(|e| bad_request(e.body_text()))?;
    let id = service.create(config)?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn show(State(service): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionConfig>, SessionError> {
    service.with(&id, |s| Ok(Json(s.config().clone())))
}

#[derive(Deserialize)]
struct WorkerQuery {
    worker: String,
}

async fn next(
    State(service): State<AppState>,
    UrlPath(id): UrlPath<String>,
    query: Result<Query<WorkerQuery>, QueryRejection>,
) -> Result<impl IntoResponse, SessionError> {
    let Query(q) = query.map_err(|e| bad_request(e.body_text()))?;
    service.with(&id, |s| s.next_stimulus(&q.worker)).map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    worker: String,
    stimulus_id: String,
    response: Response,
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

async fn label(
    State(service): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<LabelRequest>, JsonRejection>,
) -> Result<impl IntoResponse, SessionError> {
    let Json(req) = body.map_err(|e| bad_request(e.body_text()))?;
    service
        .with(&id, |s| s.submit(&req.worker, &req.stimulus_id, req.response, now_ms()))
        .map(Json)
}

async fn template(State(service): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, SessionError> {
    service.with(&id, |s| s.template()).map(Json)
}

async fn export(State(service): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, SessionError> {
    let text = service.with(&id, |s| Ok(s.export().to_owned()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text))
}

/// Serves `data_dir` on `addr` until interrupted. Prints the bound address
/// on stdout first, so port 0 can be used.
pub fn serve(addr: SocketAddr, data_dir: &Path) -> Result<(), SessionError> {
    serve_service(addr, Service::open(data_dir)?)
}

pub fn serve_service(addr: SocketAddr, service: Service) -> Result<(), SessionError> {
    let service = Arc::new(service);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| SessionError::Storage(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| SessionError::InvalidRequest(format!("cannot bind {addr}: {e}")))?;
        let bound = listener.local_addr().map_err(|e| SessionError::Storage(e.to_string()))?;
        let mut stdout = std::io::stdout();
        let _ = writeln!(stdout, "listening on http://{bound}");
        let _ = stdout.flush();
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| SessionError::Storage(e.to_string()))
    })
}
