//! HTTP server speaking the model wire contract, backed by any transport
//! (builtin models or recorded fixtures).

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flatlift_core::backends::{Role, Transport, TransportError};
use serde_json::json;

pub fn router(transport: Arc<dyn Transport>) -> Router {
    Router::new()
        .route("/v1/:role", post(handle))
        .route("/health", get(|| async { Json(json!({ "ok": true })) }))
        .with_state(transport)
}

async fn handle(State(transport): State<Arc<dyn Transport>>, Path(role): Path<String>, body: Bytes) -> Response {
    let Some(role) = Role::from_name(&role) else {
        return (StatusCode::NOT_FOUND, Json(json!({ "error": format!("unknown role {role:?}") }))).into_response();
    };
    let result = tokio::task::spawn_blocking(move || transport.post(role, &body)).await;
    match result {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Ok(Err(TransportError::Retryable(m))) => {
            (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "error": m }))).into_response()
        }
        Ok(Err(TransportError::Fatal(m))) => (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": m }))).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}
