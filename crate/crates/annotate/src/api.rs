//! HTTP surface under `/api/v1`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::AnnotateError;
use crate::store::Store;

pub struct AppState {
    pub store: Mutex<Store>,
    /// Bearer token → annotator id.
    pub tokens: BTreeMap<String, String>,
    /// Exports are only ever written inside this directory.
    pub export_dir: PathBuf,
}

impl AppState {
    pub fn new(store: Store, tokens: BTreeMap<String, String>, export_dir: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(AppState {
            store: Mutex::new(store),
            tokens,
            export_dir: export_dir.into(),
        })
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        // A panic mid-request cannot leave the store half-applied: events are
        // applied only after the log append succeeds.
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn unauthorized() -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token")
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::Validation { field, message } => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                code: "validation",
                message,
                field: Some(field),
            },
            AnnotateError::NotFound(m) => ApiError::new(StatusCode::NOT_FOUND, "not_found", m),
            AnnotateError::Conflict(m) => ApiError::new(StatusCode::CONFLICT, "conflict", m),
            AnnotateError::BadRequest(m) => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", m),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn annotator(state: &AppState, headers: &HeaderMap) -> Result<String, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(ApiError::unauthorized)?;
    state.tokens.get(token.trim()).cloned().ok_or_else(ApiError::unauthorized)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/tasks/next", get(next_task))
        .route("/api/v1/tasks/{id}", get(get_task))
        .route("/api/v1/tasks/{id}/submit", post(submit))
        .route("/api/v1/tasks/{id}/release", post(release))
        .route("/api/v1/tasks/{id}/reopen", post(reopen))
        .route("/api/v1/users/{id}/homepage", get(homepage))
        .route("/api/v1/export", post(export))
        .route("/api/v1/stats", get(stats))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

async fn next_task(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Value> {
    let who = annotator(&state, &headers)?;
    match state.store().next_task(&who)? {
        Some(task) => Ok(Json(json!({ "status": "assigned", "task": task }))),
        None => Ok(Json(json!({ "status": "none_remaining" }))),
    }
}

async fn get_task(State(state): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Value> {
    annotator(&state, &headers)?;
    let task = state.store().task(&id)?;
    Ok(Json(serde_json::to_value(task).expect("tasks serialize")))
}

async fn submit(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<Value> {
    let who = annotator(&state, &headers)?;
    let Json(payload) = body?;
    let outcome = state.store().submit(&id, &who, &payload)?;
    Ok(Json(serde_json::to_value(outcome).expect("outcomes serialize")))
}

async fn release(State(state): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Value> {
    let who = annotator(&state, &headers)?;
    let task = state.store().release(&id, &who)?;
    Ok(Json(serde_json::to_value(task).expect("tasks serialize")))
}

async fn reopen(State(state): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Value> {
    let who = annotator(&state, &headers)?;
    let task = state.store().reopen(&id, &who)?;
    Ok(Json(serde_json::to_value(task).expect("tasks serialize")))
}

async fn homepage(State(state): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Value> {
    annotator(&state, &headers)?;
    let view = state.store().homepage(&id)?;
    Ok(Json(serde_json::to_value(view).expect("homepages serialize")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportRequest {
    #[serde(default)]
    file_name: Option<String>,
}

#[derive(Debug, Serialize)]
struct ExportResponse {
    records: usize,
    positives: usize,
    negatives: usize,
    path: String,
}

fn safe_file_name(name: &str) -> Result<&str, ApiError> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(name)
    } else {
        Err(ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "validation",
            message: "file name may only use letters, digits, '.', '_' and '-'".into(),
            field: Some("file_name".into()),
        })
    }
}

async fn export(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Option<Json<Value>>,
) -> ApiResult<ExportResponse> {
    annotator(&state, &headers)?;
    let request: ExportRequest = match body {
        Some(Json(v)) => serde_json::from_value(v)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?,
        None => ExportRequest::default(),
    };
    let name = safe_file_name(request.file_name.as_deref().unwrap_or("annotations.jsonl"))?;
    let dataset = state.store().export();
    std::fs::create_dir_all(&state.export_dir).map_err(|e| ApiError::from(AnnotateError::io(&state.export_dir, e)))?;
    let path = state.export_dir.join(name);
    quadfuse_core::record::save_dataset(&dataset, &path).map_err(|e| ApiError::from(AnnotateError::from(e)))?;
    let positives = dataset.positives();
    Ok(Json(ExportResponse {
        records: dataset.len(),
        positives,
        negatives: dataset.len() - positives,
        path: path.display().to_string(),
    }))
}

async fn stats(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Value> {
    annotator(&state, &headers)?;
    let stats = state.store().stats();
    Ok(Json(serde_json::to_value(stats).expect("stats serialize")))
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
