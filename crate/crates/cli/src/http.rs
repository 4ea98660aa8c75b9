//! JSON routes over a [`ChatEngine`] and a [`SessionStore`].

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use copydial::{ChatEngine, Error, ModelInfo, Reply, SessionStore};
use serde::{Deserialize, Serialize};

pub struct AppState {
    /// `None` when the service runs without a checkpoint.
    pub engine: Option<Arc<ChatEngine>>,
    pub sessions: Arc<SessionStore>,
}

impl AppState {
    pub fn new(engine: Option<ChatEngine>, idle_timeout: Duration) -> Self {
        AppState {
            engine: engine.map(Arc::new),
            sessions: Arc::new(SessionStore::new(idle_timeout)),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::SessionNotFound(_) => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn engine(state: &AppState) -> Result<Arc<ChatEngine>, ApiError> {
    state
        .engine
        .clone()
        .ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "no checkpoint loaded".into()))
}

async fn create_session(State(state): State<Arc<AppState>>) -> Result<Json<SessionCreated>, ApiError> {
    engine(&state)?;
    Ok(Json(SessionCreated {
        session_id: state.sessions.create(),
    }))
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<MessageRequest>,
) -> Result<Json<Reply>, ApiError> {
    let engine = engine(&state)?;
    if body.text.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "empty text".into()));
    }
    let sessions = state.sessions.clone();
    let reply = tokio::task::spawn_blocking(move || sessions.message(&engine, &id, &body.text))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(reply))
}

async fn model_info(State(state): State<Arc<AppState>>) -> Result<Json<ModelInfo>, ApiError> {
    Ok(Json(engine(&state)?.info()))
}

async fn health() -> StatusCode {
    StatusCode::OK
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/model", get(model_info))
        .route("/health", get(health))
        .with_state(state)
}

/// Serves until the process is stopped, expiring idle sessions once a minute.
pub async fn serve(state: Arc<AppState>, port: u16) -> anyhow::Result<()> {
    let sessions = state.sessions.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sessions.expire_idle();
            if n > 0 {
                log::info!("expired {n} idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
