//! HTTP/JSON front end for the gate.

use std::collections::HashMap;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sastgate_core::gate::{Decision, Gate, SubmissionState};
use sastgate_core::Error;
use serde_json::json;

/// Multipart overhead allowed on top of the archive cap.
const FORM_SLACK: usize = 1 << 20;

#[derive(Clone)]
struct AppState {
    gate: Arc<Gate>,
}

struct ApiError(Error, Option<serde_json::Value>);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e, None)
    }
}

fn error_kind(e: &Error) -> (StatusCode, &'static str) {
    match e {
        Error::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
        Error::NotReady(_) => (StatusCode::CONFLICT, "not-ready"),
        Error::InvalidTransition { .. } => (StatusCode::CONFLICT, "invalid-transition"),
        Error::AlreadyDecided(_) => (StatusCode::CONFLICT, "already-decided"),
        Error::InvalidDecision(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-decision"),
        Error::RejectedInput(_) => (StatusCode::BAD_REQUEST, "rejected-input"),
        Error::TooLarge { .. } => (StatusCode::PAYLOAD_TOO_LARGE, "too-large"),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = error_kind(&self.0);
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        let mut body = json!({ "error": kind, "message": self.0.to_string() });
        if let Some(extra) = self.1 {
            body["decision"] = extra;
        }
        (status, Json(body)).into_response()
    }
}

fn plain_error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": kind, "message": message.into() }))).into_response()
}

pub fn router(gate: Arc<Gate>) -> Router {
    let limit = usize::try_from(gate.config().max_archive_bytes)
        .unwrap_or(usize::MAX)
        .saturating_add(FORM_SLACK);
    Router::new()
        .route("/health", get(health))
        .route("/submissions", post(submit).get(list))
        .route("/submissions/{id}", get(get_submission))
        .route("/submissions/{id}/assess", post(assess))
        .route("/submissions/{id}/report", get(report))
        .route("/submissions/{id}/decision", post(decide).get(get_decision))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(AppState { gate })
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Multipart fields: `archive` (file) and `submitter` (text).
async fn submit(State(st): State<AppState>, mut form: Multipart) -> Response {
    let mut archive = None;
    let mut submitter = None;
    loop {
        let field = match form.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return plain_error(e.status(), "rejected-input", e.body_text()),
        };
        let name = field.name().unwrap_or("").to_string();
        let bytes = match field.bytes().await {
            Ok(b) => b,
            Err(e) => return plain_error(e.status(), "rejected-input", e.body_text()),
        };
        match name.as_str() {
            "archive" => archive = Some(bytes),
            "submitter" => submitter = Some(String::from_utf8_lossy(&bytes).into_owned()),
            _ => {}
        }
    }
    let Some(archive) = archive else {
        return plain_error(StatusCode::BAD_REQUEST, "rejected-input", "missing archive field");
    };
    let submitter = submitter.unwrap_or_default();
    let gate = Arc::clone(&st.gate);
    let result = tokio::task::spawn_blocking(move || gate.submit(&archive, &submitter)).await;
    match result.expect("submit task panicked") {
        Ok(s) => (StatusCode::CREATED, Json(json!({ "id": s.id, "submission": s }))).into_response(),
        Err(e) => ApiError::from(e).into_response(),
    }
}

async fn list(State(st): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    let state = match q.get("state").map(|s| s.parse::<SubmissionState>()) {
        None => None,
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => return plain_error(StatusCode::BAD_REQUEST, "invalid-query", e.to_string()),
    };
    Json(st.gate.queue(state)).into_response()
}

async fn get_submission(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = st.gate.get(&id)?;
    let mut value = serde_json::to_value(&s).map_err(Error::from)?;
    if let Some(d) = st.gate.decision(&id) {
        value["decision"] = serde_json::to_value(d).map_err(Error::from)?;
    }
    Ok(Json(value).into_response())
}

/// Moves the submission to Scanning and runs the analyzers in the
/// background; poll the submission for the outcome.
async fn assess(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let gate = Arc::clone(&st.gate);
    let sid = id.clone();
    let started = tokio::task::spawn_blocking(move || gate.start_assess(&sid))
        .await
        .expect("assess task panicked")?;
    let gate = Arc::clone(&st.gate);
    tokio::task::spawn_blocking(move || {
        if let Err(e) = gate.finish_assess(&id) {
            log::error!("assessment of {id} failed: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(started)).into_response())
}

async fn report(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = st.gate.get_report_bytes(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn get_decision(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    st.gate.get(&id)?;
    match st.gate.decision(&id) {
        Some(d) => Ok(Json(d).into_response()),
        None => Ok(plain_error(StatusCode::NOT_FOUND, "not-found", format!("submission {id} has no decision"))),
    }
}

fn authorized(gate: &Gate, headers: &HeaderMap) -> bool {
    let Some(token) = &gate.config().moderator_token else {
        return true;
    };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|v| v == token)
}

async fn decide(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Decision>, axum::extract::rejection::JsonRejection>,
) -> Response {
    if !authorized(&st.gate, &headers) {
        return plain_error(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong moderator token");
    }
    let Json(decision) = match body {
        Ok(b) => b,
        Err(e) => return plain_error(StatusCode::UNPROCESSABLE_ENTITY, "invalid-decision", e.body_text()),
    };
    let gate = Arc::clone(&st.gate);
    let sid = id.clone();
    let result = tokio::task::spawn_blocking(move || gate.decide(&sid, decision))
        .await
        .expect("decide task panicked");
    match result {
        Ok(s) => Json(s).into_response(),
        Err(e @ Error::AlreadyDecided(_)) => {
            let existing = st.gate.decision(&id).and_then(|d| serde_json::to_value(d).ok());
            ApiError(e, existing).into_response()
        }
        Err(e) => ApiError::from(e).into_response(),
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Serves until SIGINT or SIGTERM, then syncs the event log.
pub async fn serve(gate: Gate, host: &str) -> anyhow::Result<()> {
    let addr = format!("{host}:{}", gate.config().port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .with_context(|| format!("cannot listen on {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let gate = Arc::new(gate);
    axum::serve(listener, router(Arc::clone(&gate)))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    gate.flush()?;
    eprintln!("shut down, event log flushed");
    Ok(())
}
