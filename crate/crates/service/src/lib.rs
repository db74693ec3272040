//! HTTP facade over the core: asynchronous analysis jobs, a synchronous
//! propagation endpoint and the collaboration relay socket.

pub mod api;
pub mod config;
pub mod jobs;
pub mod ops;
pub mod sessions;

use std::net::SocketAddr;

use axum::body::{to_bytes, Body};
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::WebSocketUpgrade;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fmkit_core::collab::{new_session_id, share_link, Session};
use fmkit_core::CancelToken;
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;

use crate::api::{
    ApiError, CancelResponse, JobAccepted, JobRequest, Operation, PropagateRequest, SessionCreated,
    SessionRequest,
};
pub use crate::config::Config;
use crate::jobs::JobQueue;
use crate::ops::Task;
use crate::sessions::Registry;

/// JSON framing overhead allowed on top of the model size limit.
const BODY_SLACK: usize = 64 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub jobs: JobQueue,
    pub sessions: Registry,
    max_model_bytes: usize,
    enum_bound: usize,
    share_base: String,
}

impl AppState {
    /// `port` is the bound port, used for share links when no public URL is set.
    pub fn new(config: &Config, port: u16) -> Self {
        AppState {
            jobs: JobQueue::new(config.job_store, config.workers, config.enum_bound),
            sessions: Registry::default(),
            max_model_bytes: config.max_model_bytes,
            enum_bound: config.enum_bound,
            share_base: config.share_base(port),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/jobs", post(submit_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/propagate", post(propagate_now))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/socket", get(session_socket))
        .fallback(|| async { ApiError::not_found("route") })
        .layer(DefaultBodyLimit::disable())
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds and serves until the process ends.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let listener = TcpListener::bind(SocketAddr::new(config.bind, config.port)).await?;
    let addr = listener.local_addr()?;
    tracing::info!("listening on {addr}");
    axum::serve(listener, router(AppState::new(&config, addr.port()))).await
}

/// Binds and serves on a background task; returns the bound address.
pub async fn spawn(config: Config) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(SocketAddr::new(config.bind, config.port)).await?;
    let addr = listener.local_addr()?;
    let app = router(AppState::new(&config, addr.port()));
    tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(addr)
}

/// Reads a body of at most the model limit plus framing and decodes it.
async fn read_json<T: DeserializeOwned>(state: &AppState, body: Body) -> Result<T, ApiError> {
    let bytes = to_bytes(body, state.max_model_bytes + BODY_SLACK)
        .await
        .map_err(|_| ApiError::too_large(state.max_model_bytes))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| ApiError::bad_request("malformed-request", e.to_string()))
}

async fn submit_job(State(state): State<AppState>, body: Body) -> Result<Response, ApiError> {
    let req: JobRequest = read_json(&state, body).await?;
    let op = ops::parse_operation(&req.operation)?;
    ops::check_model(&req.model, state.max_model_bytes)?;
    let task = Task::new(op, req.params)?;
    let job_id = state.jobs.submit(task, req.model);
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })).into_response())
}

async fn get_job(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let view = state
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::not_found("job"))?;
    Ok(Json(view).into_response())
}

async fn cancel_job(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let status = state
        .jobs
        .cancel(&id)
        .ok_or_else(|| ApiError::not_found("job"))?;
    Ok(Json(CancelResponse { status }).into_response())
}

/// Same payload as a PROPAGATE job, answered inline.
async fn propagate_now(State(state): State<AppState>, body: Body) -> Result<Response, ApiError> {
    let req: PropagateRequest = read_json(&state, body).await?;
    if let Some(name) = &req.operation {
        if ops::parse_operation(name)? != Operation::Propagate {
            return Err(ApiError::bad_request(
                "unknown-operation",
                "only PROPAGATE is served here",
            ));
        }
    }
    ops::check_model(&req.model, state.max_model_bytes)?;
    let task = Task::new(Operation::Propagate, req.params)?;
    let bound = state.enum_bound;
    let value = tokio::task::spawn_blocking(move || {
        ops::run(&task, &req.model, bound, &CancelToken::new())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(value).into_response())
}

async fn create_session(State(state): State<AppState>, body: Body) -> Result<Response, ApiError> {
    let req: SessionRequest = read_json(&state, body).await?;
    ops::check_model(&req.model, state.max_model_bytes)?;
    let model = ops::parse_model(&req.model)?;
    let session_id = new_session_id();
    let session = Session::host(
        session_id.clone(),
        model,
        req.host_name.trim(),
        req.move_mode,
    )
    .map_err(|e| ApiError::unprocessable("invalid-model", e.to_string()))?;
    let host_token = uuid::Uuid::new_v4().simple().to_string();
    state.sessions.open(session, host_token.clone());
    let created = SessionCreated {
        share_link: share_link(&state.share_base, &session_id),
        session_id,
        host_token,
    };
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn session_socket(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, ApiError> {
    if !state.sessions.contains(&id) {
        return Err(ApiError::not_found("session"));
    }
    let ws = ws.map_err(|e| ApiError::bad_request("upgrade-required", e.body_text()))?;
    let registry = state.sessions.clone();
    Ok(ws.on_upgrade(move |socket| sessions::serve_socket(registry, id, socket)))
}
