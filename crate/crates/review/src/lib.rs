//! Local HTTP service for the human validation stages: reviewers read
//! detections with their proposed strategies, record verdicts and finalize
//! the anonymized corpus.
//!
//! Routes:
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/api/health` | liveness and version |
//! | GET | `/api/documents` | every document with its review progress |
//! | GET | `/api/documents/{id}/bundle` | turns, detections, verdicts, preview |
//! | POST | `/api/detections/{id}/verdict` | append a verdict |
//! | POST | `/api/projects/{id}/finalize` | anonymize with the recorded verdicts |
//! | POST | `/api/projects/{id}/reopen` | return a finalized project to review |
//! | GET | `/api/reports/latest` | latest evaluation report |
//!
//! Anything else is served from the static asset directory, if one is set.

pub mod project;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tower_http::services::ServeDir;

use sfaa_core::pipeline::TOOL_VERSION;
use sfaa_core::{Error, ErrorFamily};

pub use project::{
    DetectionView, DocumentSummary, FinalizeRequest, FinalizeResponse, Project, ProjectState, ReviewBundle,
    StateChange, TurnPreview, VerdictRequest,
};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Project(#[from] Error),
    #[error("server error: {0}")]
    Server(std::io::Error),
}

/// Shared project handle. Reads take the lock shared; mutations take it
/// exclusively, so they are applied one at a time.
pub type SharedProject = Arc<RwLock<Project>>;

/// JSON error body: `{"error": {"kind", "message", "details"}}`.
pub struct ApiError(Error);

#[derive(Serialize)]
struct ErrorBody {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::NotFound(_) => "NotFound",
        Error::WrongState { .. } => "WrongState",
        Error::UnreviewedDetections(_) => "UnreviewedDetections",
        Error::CorruptProject(_) => "CorruptProject",
        Error::UnknownSubtype(_) => "UnknownSubtype",
        Error::MalformedInput { .. } => "MalformedInput",
        Error::Llm(_) => "Llm",
        _ => match e.family() {
            ErrorFamily::Config => "Config",
            ErrorFamily::Io => "Io",
            _ => "Validation",
        },
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = self.0;
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::WrongState { .. } | Error::UnreviewedDetections(_) => StatusCode::CONFLICT,
            Error::MalformedInput { .. } | Error::UnknownSubtype(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Llm(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let details = match &e {
            Error::WrongState { expected, actual } => Some(serde_json::json!({"expected": expected, "actual": actual})),
            Error::UnreviewedDetections(ids) => Some(serde_json::json!({ "detection_ids": ids })),
            _ => None,
        };
        let body = ErrorBody {
            kind: kind_of(&e),
            message: e.to_string(),
            details,
        };
        (status, Json(serde_json::json!({ "error": body }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Run a blocking closure against the project under the read lock.
async fn read<T, F>(p: &SharedProject, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Project) -> sfaa_core::Result<T> + Send + 'static,
{
    let p = p.clone();
    tokio::task::spawn_blocking(move || {
        let guard = p.read().unwrap_or_else(|poisoned| poisoned.into_inner());
        f(&guard)
    })
    .await
    .map_err(|e| ApiError(Error::CorruptProject(format!("worker failed: {e}"))))?
    .map(Json)
    .map_err(ApiError)
}

/// Run a blocking closure against the project under the write lock.
async fn write<T, F>(p: &SharedProject, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Project) -> sfaa_core::Result<T> + Send + 'static,
{
    let p = p.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = p.write().unwrap_or_else(|poisoned| poisoned.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError(Error::CorruptProject(format!("worker failed: {e}"))))?
    .map(Json)
    .map_err(ApiError)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": TOOL_VERSION }))
}

async fn documents(State(p): State<SharedProject>) -> ApiResult<Vec<DocumentSummary>> {
    read(&p, |p| Ok(p.documents())).await
}

async fn bundle(State(p): State<SharedProject>, Path(id): Path<String>) -> ApiResult<ReviewBundle> {
    read(&p, move |p| p.bundle(&id)).await
}

async fn verdict(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
    body: Result<Json<VerdictRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<DetectionView> {
    let Json(req) = body.map_err(|e| {
        ApiError(Error::MalformedInput {
            line: 0,
            message: e.body_text(),
        })
    })?;
    write(&p, move |p| p.submit_verdict(&id, req)).await
}

async fn finalize(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
    body: Option<Json<FinalizeRequest>>,
) -> ApiResult<FinalizeResponse> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    write(&p, move |p| p.finalize(&id, req)).await
}

async fn reopen(State(p): State<SharedProject>, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    write(&p, move |p| {
        let state = p.reopen(&id)?;
        Ok(serde_json::json!({ "project_id": id, "state": state }))
    })
    .await
}

async fn latest_report(State(p): State<SharedProject>) -> ApiResult<serde_json::Value> {
    read(&p, |p| p.latest_report()).await
}

const PLACEHOLDER_PAGE: &str = "<!doctype html><meta charset=\"utf-8\"><title>sfaa review</title>\
<p>The review API is running. No UI assets are installed; see <code>/api/documents</code>.</p>";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

/// Build the router. Static assets come from `assets` when given.
pub fn router(project: SharedProject, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/documents", get(documents))
        .route("/api/documents/{id}/bundle", get(bundle))
        .route("/api/detections/{id}/verdict", post(verdict))
        .route("/api/projects/{id}/finalize", post(finalize))
        .route("/api/projects/{id}/reopen", post(reopen))
        .route("/api/reports/latest", get(latest_report))
        .with_state(project);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(project: Project, addr: SocketAddr, assets: Option<PathBuf>) -> Result<(), ServeError> {
    if !addr.ip().is_loopback() {
        log::warn!("review service bound to non-loopback address {addr}; transcripts will be reachable from the network");
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    log::info!("reviewing project {} at http://{addr}/", project.id());
    let app = router(Arc::new(RwLock::new(project)), assets);
    axum::serve(listener, app).await.map_err(ServeError::Server)
}
