//! HTTP routes.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::session::{ActOutcome, FinishOutcome, TrialView};
use crate::store::Store;

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub participant: String,
    pub stimulus_set: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub trial: TrialView,
}

#[derive(Debug, Deserialize)]
pub struct ActRequest {
    pub a: usize,
    pub b: usize,
    #[serde(default)]
    pub t_select_a_ms: Option<f64>,
    #[serde(default)]
    pub t_select_b_ms: Option<f64>,
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    r.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn create(
    State(store): State<Arc<Store>>,
    req: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<Json<CreateResponse>, ServiceError> {
    let req = body(req)?;
    let (session_id, trial) = store.create(&req.participant, &req.stimulus_set, req.seed, req.note)?;
    Ok(Json(CreateResponse { session_id, trial }))
}

async fn trial(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Json<TrialView>, ServiceError> {
    store.trial(&id).map(Json)
}

async fn act(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    req: Result<Json<ActRequest>, JsonRejection>,
) -> Result<Json<ActOutcome>, ServiceError> {
    let req = body(req)?;
    store.act(&id, req.a, req.b, req.t_select_a_ms, req.t_select_b_ms).map(Json)
}

async fn finish_trial(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> Result<Json<FinishOutcome>, ServiceError> {
    // Settling and a first oracle call can take a while on large towers.
    tokio::task::spawn_blocking(move || store.finish_trial(&id))
        .await
        .map_err(|e| ServiceError::Corrupt(format!("scoring task failed: {e}")))?
        .map(Json)
}

async fn export(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let text = store.export(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text))
}

/// API routes, with `static_dir` (the UI bundle) served for everything else.
pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/trial", get(trial))
        .route("/sessions/{id}/act", post(act))
        .route("/sessions/{id}/finish_trial", post(finish_trial))
        .route("/sessions/{id}/export", get(export))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind `addr` and serve until the process ends.
pub async fn serve(store: Arc<Store>, static_dir: Option<PathBuf>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store, static_dir)).await
}
