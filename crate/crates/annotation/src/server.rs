//! JSON-over-HTTP API for annotators.
//!
//! - `GET  /api/items/next?annotator=ID`
//! - `POST /api/labels` with `{annotator, query_id, label}`
//! - `GET  /api/progress`
//! - `GET  /api/agreement`
//! - `GET  /api/items/{id}`

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{AnnotationError, AnnotationItem, ItemStatus, Label, Workspace};

pub type SharedWorkspace = Arc<Mutex<Workspace>>;

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

#[derive(Debug, Deserialize)]
pub struct LabelRequest {
    pub annotator: String,
    pub query_id: String,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelAck {
    pub query_id: String,
    pub annotator: String,
    pub label: Label,
    pub status: ItemStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextResponse {
    pub item: Option<AnnotationItem>,
}

struct ApiError(StatusCode, String);

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let code = match e {
            AnnotationError::UnknownAnnotator(_) | AnnotationError::UnknownItem(_) => StatusCode::NOT_FOUND,
            AnnotationError::UnknownLabel(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn lock(ws: &SharedWorkspace) -> MutexGuard<'_, Workspace> {
    // A panic while holding the lock cannot leave the workspace half-updated:
    // the store is written before live state changes.
    ws.lock().unwrap_or_else(|p| p.into_inner())
}

async fn next_item(State(ws): State<SharedWorkspace>, Query(q): Query<NextQuery>) -> Result<Json<NextResponse>, ApiError> {
    let ws = lock(&ws);
    Ok(Json(NextResponse { item: ws.next_item(&q.annotator)?.cloned() }))
}

async fn submit(State(ws): State<SharedWorkspace>, body: Bytes) -> Result<Json<LabelAck>, ApiError> {
    let req: LabelRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))?;
    let label: Label = req.label.parse()?;
    let status = lock(&ws).submit_label(&req.annotator, &req.query_id, label)?;
    Ok(Json(LabelAck { query_id: req.query_id, annotator: req.annotator, label, status }))
}

async fn progress(State(ws): State<SharedWorkspace>) -> impl IntoResponse {
    Json(lock(&ws).progress())
}

async fn agreement(State(ws): State<SharedWorkspace>) -> impl IntoResponse {
    Json(lock(&ws).agreement())
}

async fn item(State(ws): State<SharedWorkspace>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(lock(&ws).item(&id)?))
}

pub fn router(ws: SharedWorkspace) -> Router {
    Router::new()
        .route("/api/items/next", get(next_item))
        .route("/api/items/{id}", get(item))
        .route("/api/labels", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/agreement", get(agreement))
        .with_state(ws)
}

/// Binds `addr` and serves until the task is cancelled.
pub async fn serve(ws: SharedWorkspace, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(ws)).await
}
