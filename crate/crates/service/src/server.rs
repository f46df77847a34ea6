use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::Utc;
use quickcue_core::{render_document, Mode, Pipeline, PipelineError, RestaurantReviewSet};
use serde::Serialize;
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;
use tracing::info;

use crate::config::ServiceConfig;
use crate::documents::{
    classify_document, digest_document, parse_review_set, ErrorDocument, SchemaError,
};

const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pipeline: Arc<Pipeline>,
    max_reviews: usize,
    started: Instant,
}

impl AppState {
    pub fn new(pipeline: Pipeline, max_reviews: usize) -> Self {
        Self {
            pipeline: Arc::new(pipeline),
            max_reviews,
            started: Instant::now(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct HealthDocument {
    pub status: &'static str,
    pub mode: Mode,
    pub prompt_version: String,
    pub uptime_seconds: f64,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(
    status: StatusCode,
    error: &str,
    message: String,
    path: Option<String>,
) -> Response {
    let doc = ErrorDocument {
        error: error.into(),
        message,
        path,
    };
    json_response(status, render_document(&doc))
}

enum ApiError {
    Schema(SchemaError),
    TooManyReviews { count: usize, limit: usize },
    Pipeline(PipelineError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::Schema(e) => error_response(
                StatusCode::BAD_REQUEST,
                "SchemaError",
                e.message,
                Some(e.path),
            ),
            ApiError::TooManyReviews { count, limit } => error_response(
                StatusCode::PAYLOAD_TOO_LARGE,
                "TooManyReviews",
                format!("{count} reviews exceed the limit of {limit}"),
                Some("reviews".into()),
            ),
            ApiError::Pipeline(PipelineError::GatewayUnavailable(inner)) => error_response(
                StatusCode::BAD_GATEWAY,
                "GatewayUnavailable",
                inner.to_string(),
                None,
            ),
        }
    }
}

fn accept(state: &AppState, body: &[u8]) -> Result<RestaurantReviewSet, ApiError> {
    let set = parse_review_set(body).map_err(ApiError::Schema)?;
    if set.reviews.len() > state.max_reviews {
        return Err(ApiError::TooManyReviews {
            count: set.reviews.len(),
            limit: state.max_reviews,
        });
    }
    Ok(set)
}

async fn classify(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let set = accept(&state, &body)?;
    let doc = classify_document(&state.pipeline, &set)
        .await
        .map_err(ApiError::Pipeline)?;
    Ok(json_response(StatusCode::OK, doc))
}

async fn digest(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let set = accept(&state, &body)?;
    let now = Utc::now();
    let doc = digest_document(&state.pipeline, &set, now.date_naive(), now)
        .await
        .map_err(ApiError::Pipeline)?;
    Ok(json_response(StatusCode::OK, doc))
}

async fn health(State(state): State<AppState>) -> Response {
    let gateway = state.pipeline.gateway();
    let doc = HealthDocument {
        status: if gateway.is_ready() { "ok" } else { "degraded" },
        mode: gateway.mode(),
        prompt_version: state.pipeline.prompt_version().to_string(),
        uptime_seconds: state.started.elapsed().as_secs_f64(),
    };
    json_response(StatusCode::OK, render_document(&doc))
}

/// Routes with CORS restricted to `allowed_origins`.
pub fn router(state: AppState, allowed_origins: &[String]) -> Router {
    let origins: Vec<HeaderValue> = allowed_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/v1/classify", post(classify))
        .route("/v1/digest", post(digest))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors)
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
    info!("shutdown requested, draining in-flight requests");
}

/// Serve until SIGINT or SIGTERM, then finish in-flight requests and return.
pub async fn serve(cfg: &ServiceConfig) -> anyhow::Result<()> {
    let pipeline = cfg.build_pipeline()?;
    if !pipeline.gateway().is_ready() {
        tracing::warn!(
            variable = %cfg.gateway.api_key_env,
            "language model credential missing; serving in degraded state"
        );
    }
    let state = AppState::new(pipeline, cfg.max_reviews_per_request.get());
    let app = router(state, &cfg.cors_allowed_origins);
    let addr = SocketAddr::new(cfg.bind_address, cfg.port);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    info!(address = %listener.local_addr()?, mode = %cfg.gateway.mode, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await
        .context("server error")?;
    info!("stopped");
    Ok(())
}
