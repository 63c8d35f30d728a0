//! HTTP front end for interactive optimization sessions: a decision maker
//! answers the questions of each trial and polls for the next ones.

pub mod backend;
pub mod session;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use backend::AgentSpec;
pub use session::{
    CreateRequest, JobState, JobView, Phase, ServiceConfig, ServiceError, Session, SessionView, Store, Transition,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Vec<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code, message, details) = match self {
            Self::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m, Vec::new()),
            Self::Invalid { message, details } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid", message, details),
            Self::Conflict(m) => (StatusCode::CONFLICT, "conflict", m, Vec::new()),
            Self::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m, Vec::new()),
        };
        (status, Json(ErrorBody { code: code.into(), message, details })).into_response()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnswersRequest {
    pub answers: Vec<String>,
}

pub type AppState = Arc<Store>;

pub fn router(store: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/environments", get(environments))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/job", get(job))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback(move |uri: axum::http::Uri| serve_static(dir.clone(), uri)),
        None => api,
    }
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

/// Files under `root`; `/` and unknown extensionless paths get index.html.
async fn serve_static(root: PathBuf, uri: axum::http::Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    if rel.split('/').any(|c| c == "..") {
        return StatusCode::NOT_FOUND.into_response();
    }
    let mut path = root.join(rel);
    if rel.is_empty() || path.is_dir() || (path.extension().is_none() && !path.exists()) {
        path = root.join(if path.is_dir() { rel } else { "" }).join("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(axum::http::header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn healthz(State(store): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "sessions": store.len() }))
}

async fn environments() -> Json<Vec<&'static str>> {
    Json(lilo_core::env::registered_ids().to_vec())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body)
        .map_err(|e| ServiceError::Invalid { message: "request body does not parse".into(), details: vec![e.to_string()] })
}

async fn create(State(store): State<AppState>, body: axum::body::Bytes) -> Result<Response, ServiceError> {
    let req: CreateRequest = parse_body(&body)?;
    let view = tokio::task::spawn_blocking(move || store.create(req))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn show(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    let s = store.get(&id)?;
    let view = s.lock().expect("session poisoned").view.clone();
    Ok(Json(view))
}

async fn job(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<JobView>, ServiceError> {
    let s = store.get(&id)?;
    let job = s.lock().expect("session poisoned").view.job.clone();
    Ok(Json(job))
}

async fn answer(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<Response, ServiceError> {
    let req: AnswersRequest = parse_body(&body)?;
    let handle = store.get(&id)?;
    let (mut run, job) = {
        let mut s = handle.lock().expect("session poisoned");
        if s.view.phase != Phase::AwaitingAnswers {
            return Err(ServiceError::Conflict(format!("session is {:?}, not awaiting answers", s.view.phase)));
        }
        let want = s.view.pending_questions.len();
        if req.answers.len() != want {
            return Err(ServiceError::Invalid {
                message: format!("expected {want} answers, got {}", req.answers.len()),
                details: Vec::new(),
            });
        }
        let run = s.run.take().ok_or_else(|| ServiceError::Internal("session has no loop".into()))?;
        let trial = s.view.trial;
        s.view.job = JobView {
            id: s.view.job.id + 1,
            state: JobState::Running,
            trial,
            started_ms: Some(session::now_ms()),
            finished_ms: None,
            error: None,
        };
        s.set_phase(Phase::RunningTrial);
        (run, s.view.job.clone())
    };
    let bg = handle.clone();
    tokio::task::spawn_blocking(move || {
        let result = run.submit_answers(req.answers.clone());
        let mut s = bg.lock().expect("session poisoned");
        s.run = Some(run);
        s.view.job.finished_ms = Some(session::now_ms());
        match result {
            Ok(()) => {
                s.view.answers.push(req.answers);
                s.view.job.state = JobState::Succeeded;
                s.after_run();
            }
            Err(e) => {
                tracing::error!(session = %s.view.id, "trial failed: {e}");
                s.view.job.state = JobState::Failed;
                s.view.job.error = Some(e.to_string());
                s.set_phase(Phase::Idle);
            }
        }
        if let Err(e) = store.persist(&s.view) {
            tracing::error!(session = %s.view.id, "snapshot not written: {e:?}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}
