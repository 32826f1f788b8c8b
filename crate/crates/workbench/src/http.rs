//! The `/v1` JSON API over an [`AnnotationStore`].
//!
//! | method | path | response |
//! |--------|------|----------|
//! | GET  | `/v1/sessions/{sid}/annotators/{aid}/next` | task, or `{"done":true}` |
//! | POST | `/v1/annotations` | `{"status":"ok"}`, 422 with field errors, 404 for unknown targets |
//! | GET  | `/v1/sessions/{sid}/progress` | per-annotator counts |
//! | GET  | `/v1/codebook` | all entries |
//! | GET  | `/v1/codebook/{entry_id}` | one entry |
//! | GET  | `/v1/sessions/{sid}/export?format=csv\|json` | export file |
//!
//! When a token is configured every request must carry
//! `Authorization: Bearer <token>`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use workbench_core::annotation::{AnnotationSubmission, FieldError};
use workbench_core::SCHEMA_VERSION;

use crate::error::WorkbenchError;
use crate::store::AnnotationStore;

#[derive(Clone)]
pub struct ApiState {
    pub store: Arc<AnnotationStore>,
    pub token: Option<Arc<str>>,
}

impl ApiState {
    pub fn new(store: Arc<AnnotationStore>) -> Self {
        ApiState { store, token: None }
    }

    pub fn with_token(mut self, token: impl Into<Arc<str>>) -> Self {
        self.token = Some(token.into());
        self
    }
}

struct ApiError(WorkbenchError);

fn field_errors(status: StatusCode, errors: &[FieldError]) -> Response {
    (status, Json(json!({ "status": "error", "errors": errors }))).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            WorkbenchError::Validation(errors) => return field_errors(StatusCode::UNPROCESSABLE_ENTITY, errors),
            WorkbenchError::UnknownSession(_) | WorkbenchError::UnknownAnnotator { .. } | WorkbenchError::UnknownTask { .. } => {
                StatusCode::NOT_FOUND
            }
            WorkbenchError::Invalid(_) | WorkbenchError::Format { .. } => StatusCode::BAD_REQUEST,
            WorkbenchError::Io { .. } | WorkbenchError::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "status": "error", "error": self.0.to_string() }))).into_response()
    }
}

impl From<WorkbenchError> for ApiError {
    fn from(e: WorkbenchError) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn next_task(State(state): State<ApiState>, Path((sid, aid)): Path<(String, String)>) -> ApiResult<Response> {
    Ok(match state.store.next_task(&sid, &aid)? {
        Some(task) => Json(task).into_response(),
        None => Json(json!({ "done": true })).into_response(),
    })
}

async fn submit(State(state): State<ApiState>, body: Result<Json<AnnotationSubmission>, JsonRejection>) -> ApiResult<Response> {
    let Json(submission) = match body {
        Ok(b) => b,
        Err(rejection) => {
            let error = FieldError { field: "body".into(), message: rejection.body_text() };
            return Ok(field_errors(StatusCode::UNPROCESSABLE_ENTITY, &[error]));
        }
    };
    let store = state.store.clone();
    // submit syncs the journal to disk
    tokio::task::spawn_blocking(move || store.submit(submission))
        .await
        .map_err(|e| WorkbenchError::Journal(format!("submit task failed: {e}")))??;
    Ok(Json(json!({ "status": "ok" })).into_response())
}

async fn progress(State(state): State<ApiState>, Path(sid): Path<String>) -> ApiResult<Response> {
    Ok(Json(state.store.progress(&sid)?).into_response())
}

async fn codebook(State(state): State<ApiState>) -> Response {
    Json(json!({ "schema_version": SCHEMA_VERSION, "entries": state.store.codebook().entries() })).into_response()
}

async fn codebook_entry(State(state): State<ApiState>, Path(entry_id): Path<String>) -> Response {
    match state.store.codebook().get(&entry_id) {
        Some(entry) => Json(entry).into_response(),
        None => (StatusCode::NOT_FOUND, Json(json!({ "status": "error", "error": format!("unknown codebook entry {entry_id}") }))).into_response(),
    }
}

#[derive(Deserialize)]
struct ExportParams {
    format: Option<String>,
}

async fn export(State(state): State<ApiState>, Path(sid): Path<String>, Query(params): Query<ExportParams>) -> ApiResult<Response> {
    let (body, content_type, ext) = match params.format.as_deref().unwrap_or("csv") {
        "csv" => (state.store.export_csv(&sid)?, "text/csv; charset=utf-8", "csv"),
        "json" => (state.store.export_json(&sid)?, "application/json", "json"),
        other => return Err(WorkbenchError::Invalid(format!("unsupported export format {other:?}")).into()),
    };
    let disposition = format!("attachment; filename=\"{sid}.{ext}\"");
    let mut response = body.into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    if let Ok(v) = HeaderValue::from_str(&disposition) {
        headers.insert(header::CONTENT_DISPOSITION, v);
    }
    Ok(response)
}

async fn require_token(State(state): State<ApiState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(&**token) {
            return (StatusCode::UNAUTHORIZED, Json(json!({ "status": "error", "error": "missing or wrong token" }))).into_response();
        }
    }
    next.run(request).await
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/v1/sessions/{sid}/annotators/{aid}/next", get(next_task))
        .route("/v1/annotations", post(submit))
        .route("/v1/sessions/{sid}/progress", get(progress))
        .route("/v1/sessions/{sid}/export", get(export))
        .route("/v1/codebook", get(codebook))
        .route("/v1/codebook/{entry_id}", get(codebook_entry))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: ApiState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
