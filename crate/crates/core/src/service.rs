//! HTTP endpoints over the [`Assistant`] facade.
//!
//! | method | path             | body / reply                                  |
//! |--------|------------------|-----------------------------------------------|
//! | POST   | `/ask`           | [`AskRequest`] → [`AskResponse`]              |
//! | POST   | `/upload`        | [`UploadRequest`] → [`UploadResponse`]        |
//! | GET    | `/sessions`      | list of session summaries                     |
//! | GET    | `/sessions/{id}` | one stored session                            |
//! | GET    | `/missing-list`  | Missing-List entries                          |
//! | GET    | `/health`        | [`HealthReport`]                              |
//!
//! Errors come back as `{"error": ..., "trace_id"?: ...}` with 400, 404 or
//! 500. The engine is synchronous, so handlers run it on the blocking pool.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::assistant::{AskRequest, AskResponse, Assistant, AssistantError, HealthReport, UploadResponse};
use crate::ingest::MissingEntry;
use crate::store::{SessionRecord, SessionSummary};

/// Curator upload; `bytes` is base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadRequest {
    pub canonical: String,
    pub filename: String,
    pub bytes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_id: Option<Uuid>,
}

pub struct ApiError(AssistantError);

impl From<AssistantError> for ApiError {
    fn from(e: AssistantError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(AssistantError::BadRequest(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, trace_id) = match &self.0 {
            AssistantError::BadRequest(_) => (StatusCode::BAD_REQUEST, None),
            AssistantError::NotFound(_) => (StatusCode::NOT_FOUND, None),
            AssistantError::Internal { trace_id, .. } => (StatusCode::INTERNAL_SERVER_ERROR, Some(*trace_id)),
        };
        let body = ErrorBody {
            error: self.0.to_string(),
            trace_id,
        };
        (code, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, AssistantError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(ApiError(AssistantError::Internal {
            message: format!("worker panicked: {e}"),
            trace_id: Uuid::new_v4(),
        })),
    }
}

async fn ask(State(a): State<Arc<Assistant>>, body: Result<Json<AskRequest>, JsonRejection>) -> ApiResult<AskResponse> {
    let Json(req) = body?;
    blocking(move || a.ask(&req)).await
}

async fn upload(
    State(a): State<Arc<Assistant>>,
    body: Result<Json<UploadRequest>, JsonRejection>,
) -> ApiResult<UploadResponse> {
    let Json(req) = body?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(req.bytes.trim())
        .map_err(|e| AssistantError::BadRequest(format!("bytes are not valid base64: {e}")))?;
    tracing::info!(canonical = %req.canonical, filename = %req.filename, size = bytes.len(), "upload received");
    blocking(move || a.upload(&req.canonical, &bytes)).await
}

async fn sessions(State(a): State<Arc<Assistant>>) -> ApiResult<Vec<SessionSummary>> {
    blocking(move || a.sessions()).await
}

async fn session(State(a): State<Arc<Assistant>>, Path(id): Path<String>) -> ApiResult<SessionRecord> {
    let id = Uuid::parse_str(&id).map_err(|_| AssistantError::NotFound(format!("session {id}")))?;
    blocking(move || a.session(id)).await
}

async fn missing_list(State(a): State<Arc<Assistant>>) -> Json<Vec<MissingEntry>> {
    Json(a.missing_list())
}

async fn health(State(a): State<Arc<Assistant>>) -> Json<HealthReport> {
    Json(a.health())
}

pub fn router(assistant: Arc<Assistant>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/upload", post(upload))
        .route("/sessions", get(sessions))
        .route("/sessions/{id}", get(session))
        .route("/missing-list", get(missing_list))
        .route("/health", get(health))
        .with_state(assistant)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(assistant: Arc<Assistant>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(assistant)).await
}
