//! JSON-over-HTTP front end.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::SessionError;
use crate::session::{CreateRequest, SessionManager};

type Shared = Arc<SessionManager>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    label: i64,
    request_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationBody {
    y: f64,
    request_id: String,
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, SessionError> {
    serde_json::from_slice(body).map_err(|e| SessionError::invalid("body", e.to_string()))
}

/// Runs blocking manager work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, SessionError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| SessionError::Storage(e.to_string()))?
}

async fn create(State(m): State<Shared>, body: Bytes) -> Result<impl IntoResponse, SessionError> {
    let req: CreateRequest = parse(&body)?;
    let (next, created) = blocking(move || m.create(req)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(next)))
}

async fn list(State(m): State<Shared>) -> impl IntoResponse {
    Json(json!({ "sessions": m.session_ids() }))
}

async fn next(State(m): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, SessionError> {
    Ok(Json(m.next(&id)?))
}

async fn state(State(m): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, SessionError> {
    Ok(Json(m.state(&id)?))
}

async fn label(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, SessionError> {
    let b: LabelBody = parse(&body)?;
    let next = blocking(move || m.submit_label(&id, b.label, &b.request_id)).await?;
    Ok(Json(next))
}

async fn observation(
    State(m): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, SessionError> {
    let b: ObservationBody = parse(&body)?;
    let next = blocking(move || m.submit_observation(&id, b.y, &b.request_id)).await?;
    Ok(Json(next))
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/label", post(label))
        .route("/sessions/{id}/observation", post(observation))
        .with_state(manager)
}

/// Serves sessions stored under `data_dir` until the process is stopped.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let manager = tokio::task::spawn_blocking(move || SessionManager::open(data_dir))
        .await
        .map_err(std::io::Error::other)?
        .map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(manager))).await
}
