//! The HTTP face of the pipeline: image in, HTML (or text, or JSON) out.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tocr_core::duoclf::DualModel;
use tocr_core::pipeline::{ocr_bytes, render_html, OcrConfig};
use tocr_core::CoreError;

pub const DEFAULT_MAX_BODY: usize = 10 * 1024 * 1024;

/// Loaded once, shared read-only by every request.
#[derive(Clone)]
pub struct AppState {
    pub model: Arc<DualModel>,
    pub config: Arc<OcrConfig>,
}

pub fn router(state: AppState, max_body: usize) -> Router {
    Router::new()
        .route("/ocr", post(ocr))
        .route("/healthz", get(|| async { "ok" }))
        .route("/version", get(version))
        .layer(DefaultBodyLimit::max(max_body))
        .with_state(state)
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(addr: &str, state: AppState, max_body: usize) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, max_body))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn version() -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "name": "tocr",
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(serde_json::json!({ "error": message }))).into_response()
}

#[derive(Debug, Deserialize)]
struct OcrQuery {
    format: Option<String>,
}

#[derive(Clone, Copy)]
enum Format {
    Html,
    Txt,
    Json,
}

async fn image_bytes(req: Request) -> Result<Bytes, Response> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let too_large = |status: StatusCode, text: String| {
        if status == StatusCode::PAYLOAD_TOO_LARGE {
            error(status, "payload too large")
        } else {
            error(StatusCode::BAD_REQUEST, &text)
        }
    };
    if multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| too_large(e.status(), e.body_text()))?;
        // the first part carrying data is the image
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| too_large(e.status(), e.body_text()))?
        {
            let bytes = field
                .bytes()
                .await
                .map_err(|e| too_large(e.status(), e.body_text()))?;
            if !bytes.is_empty() {
                return Ok(bytes);
            }
        }
        Err(error(StatusCode::BAD_REQUEST, "no image in form"))
    } else {
        Bytes::from_request(req, &())
            .await
            .map_err(|e| too_large(e.status(), e.body_text()))
    }
}

async fn ocr(State(state): State<AppState>, Query(q): Query<OcrQuery>, req: Request) -> Response {
    let format = match q.format.as_deref().unwrap_or("html") {
        "html" => Format::Html,
        "txt" | "text" => Format::Txt,
        "json" => Format::Json,
        other => return error(StatusCode::BAD_REQUEST, &format!("unknown format {other:?}")),
    };
    let bytes = match image_bytes(req).await {
        Ok(b) => b,
        Err(r) => return r,
    };
    let result = tokio::task::spawn_blocking(move || ocr_bytes(&bytes, &state.model, &state.config)).await;
    let result = match result {
        Ok(Ok(r)) => r,
        Ok(Err(CoreError::Decode(_))) => return error(StatusCode::BAD_REQUEST, "undecodable image"),
        Ok(Err(e)) => {
            log::error!("ocr failed: {e}");
            return error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string());
        }
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    };
    match format {
        Format::Html => (
            [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
            render_html(&result),
        )
            .into_response(),
        Format::Txt => (
            [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
            result.text(),
        )
            .into_response(),
        Format::Json => Json(result.to_json()).into_response(),
    }
}
