//! HTTP frame service.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::request::{execute, ErrorKind, RenderRequest, RequestError, Scene};

pub const LEVEL_CAP_HEADER: &str = "x-level-cap";
pub const RENDER_MS_HEADER: &str = "x-render-ms";

pub struct ServiceState {
    pub scene: Scene,
    pub workers: usize,
    pub pixel_budget: usize,
}

impl IntoResponse for RequestError {
    fn into_response(self) -> Response {
        let status = match self.kind {
            ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
            ErrorKind::UnknownField => StatusCode::NOT_FOUND,
            ErrorKind::PixelBudget => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.kind.code(), "message": self.message }))).into_response()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(LEVEL_CAP_HEADER), HeaderName::from_static(RENDER_MS_HEADER)]);
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/info", get(info))
        .route("/render", post(render))
        .fallback(|| async { RequestError::new(ErrorKind::BadRequest, "no such endpoint").into_response() })
        .layer(cors)
        .with_state(state)
}

async fn info(State(state): State<Arc<ServiceState>>) -> impl IntoResponse {
    Json(state.scene.info())
}

async fn render(State(state): State<Arc<ServiceState>>, body: Bytes) -> Result<Response, RequestError> {
    let req: RenderRequest = serde_json::from_slice(&body)
        .map_err(|e| RequestError::new(ErrorKind::BadRequest, format!("malformed request: {e}")))?;
    let out = tokio::task::spawn_blocking(move || execute(&state.scene, &req, state.workers, state.pixel_budget))
        .await
        .map_err(|e| RequestError::new(ErrorKind::Internal, e.to_string()))??;
    let mut resp = out.bytes.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(out.content_type));
    h.insert(LEVEL_CAP_HEADER, HeaderValue::from(out.level_cap as u32));
    h.insert(RENDER_MS_HEADER, HeaderValue::from_str(&format!("{:.3}", out.millis)).expect("ascii"));
    Ok(resp)
}

/// Binds `addr`, reports the bound address through `on_bound` and serves
/// until the process ends.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
