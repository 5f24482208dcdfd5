//! HTTP filtering service.
//!
//! `POST /v1/filter` takes `{"comments": [..]}` and answers with a mask of the
//! same length, 1 = keep and 0 = remove, index `i` referring to comment `i`.
//! `GET /v1/health` reports whether a model is loaded.
//!
//! One model is loaded before the listener starts accepting and is shared
//! read-only by every request. An admission gate bounds the number of filter
//! requests in flight; requests beyond it get 503 with `Retry-After`.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smartbullets::classifier::{predict_mask, Pipeline, TrainedModel};
use smartbullets::{Lexicon, StopwordSet};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;
use tower_http::cors::{Any, CorsLayer};
use tower_http::timeout::TimeoutLayer;

pub const DEFAULT_MAX_COMMENTS: usize = 10_000;
pub const DEFAULT_MAX_CONCURRENT: usize = 200;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Upper bound on request bodies; the comment-count limit is the real
/// contract, this only stops unbounded reads.
const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub model_path: PathBuf,
    /// Segmentation lexicon; the bundled one when `None`.
    pub lexicon_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub max_comments: usize,
    pub max_concurrent_requests: usize,
    pub request_timeout: Duration,
}

impl ServerConfig {
    pub fn new(listen: SocketAddr, model_path: impl Into<PathBuf>) -> Self {
        Self {
            listen,
            model_path: model_path.into(),
            lexicon_path: None,
            stopwords_path: None,
            max_comments: DEFAULT_MAX_COMMENTS,
            max_concurrent_requests: DEFAULT_MAX_CONCURRENT,
            request_timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("failed to load model: {0}")]
    ModelLoad(String),
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A model ready to serve, with its identity.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: TrainedModel,
    pub pipeline: Pipeline,
    /// Hex SHA-256 of the model file bytes.
    pub model_id: String,
}

impl LoadedModel {
    pub fn from_bytes(
        bytes: &[u8],
        lexicon: Lexicon,
        stopwords: StopwordSet,
    ) -> Result<Self, ServeError> {
        let model =
            TrainedModel::from_json_bytes(bytes).map_err(|e| ServeError::ModelLoad(e.to_string()))?;
        let pipeline = Pipeline {
            lexicon,
            stopwords,
            vocab: model.vocab.clone(),
        };
        Ok(Self {
            model,
            pipeline,
            model_id: hex::encode(Sha256::digest(bytes)),
        })
    }

    pub fn from_config(cfg: &ServerConfig) -> Result<Self, ServeError> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|e| ServeError::ModelLoad(format!("{}: {e}", p.display())))
        };
        let text = |p: &Path| read(p).map(|b| String::from_utf8_lossy(&b).into_owned());
        let lexicon = match &cfg.lexicon_path {
            Some(p) => Lexicon::parse(&text(p)?),
            None => Lexicon::bundled(),
        };
        let stopwords = match &cfg.stopwords_path {
            Some(p) => StopwordSet::parse(&text(p)?),
            None => StopwordSet::bundled(),
        };
        Self::from_bytes(&read(&cfg.model_path)?, lexicon, stopwords)
    }

    pub fn mask<S: AsRef<str> + Sync>(&self, comments: &[S]) -> Vec<u8> {
        predict_mask(&self.model.params, comments, &self.pipeline)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRequest {
    pub comments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterResponse {
    pub mask: Vec<u8>,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub status: String,
    pub model_id: Option<String>,
    pub uptime_s: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("request has {count} comments, limit is {limit}")]
    PayloadTooLarge { count: usize, limit: usize },
    #[error("no model loaded")]
    Unavailable,
    #[error("server busy, retry later")]
    Busy,
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::PayloadTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::Unavailable | ApiError::Busy => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let mut resp = (
            status,
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response();
        if matches!(self, ApiError::Busy | ApiError::Unavailable) {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
        }
        resp
    }
}

struct Inner {
    model: Option<Arc<LoadedModel>>,
    max_comments: usize,
    gate: Arc<Semaphore>,
    max_concurrent: usize,
    started: Instant,
}

/// Shared, immutable service state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(
        model: Option<LoadedModel>,
        max_comments: usize,
        max_concurrent_requests: usize,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                model: model.map(Arc::new),
                max_comments,
                gate: Arc::new(Semaphore::new(max_concurrent_requests)),
                max_concurrent: max_concurrent_requests,
                started: Instant::now(),
            }),
        }
    }

    pub fn model(&self) -> Option<&Arc<LoadedModel>> {
        self.inner.model.as_ref()
    }

    /// Filter requests currently admitted.
    pub fn in_flight(&self) -> usize {
        self.inner.max_concurrent - self.inner.gate.available_permits()
    }
}

/// Computes the mask for one request.
pub fn handle_filter(state: &AppState, req: &FilterRequest) -> Result<FilterResponse, ApiError> {
    let model = state.model().ok_or(ApiError::Unavailable)?;
    if req.comments.len() > state.inner.max_comments {
        return Err(ApiError::PayloadTooLarge {
            count: req.comments.len(),
            limit: state.inner.max_comments,
        });
    }
    Ok(FilterResponse {
        mask: model.mask(&req.comments),
        model_id: model.model_id.clone(),
    })
}

pub fn handle_health(state: &AppState) -> (StatusCode, HealthStatus) {
    let uptime_s = state.inner.started.elapsed().as_secs_f64();
    match state.model() {
        Some(m) => (
            StatusCode::OK,
            HealthStatus {
                status: "ok".into(),
                model_id: Some(m.model_id.clone()),
                uptime_s,
            },
        ),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            HealthStatus {
                status: "degraded".into(),
                model_id: None,
                uptime_s,
            },
        ),
    }
}

async fn filter_endpoint(
    State(state): State<AppState>,
    body: Result<Json<FilterRequest>, JsonRejection>,
) -> Result<Json<FilterResponse>, ApiError> {
    if state.model().is_none() {
        return Err(ApiError::Unavailable);
    }
    let Json(req) = body.map_err(|rej| {
        if rej.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::PayloadTooLarge {
                count: 0,
                limit: state.inner.max_comments,
            }
        } else {
            ApiError::BadRequest(rej.body_text())
        }
    })?;
    // Cheap check before handing work to the blocking pool.
    if req.comments.len() > state.inner.max_comments {
        return Err(ApiError::PayloadTooLarge {
            count: req.comments.len(),
            limit: state.inner.max_comments,
        });
    }
    let resp = tokio::task::spawn_blocking(move || handle_filter(&state, &req))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(resp))
}

async fn health_endpoint(State(state): State<AppState>) -> Response {
    let (status, body) = handle_health(&state);
    (status, Json(body)).into_response()
}

async fn admission(State(state): State<AppState>, req: Request, next: Next) -> Response {
    match state.inner.gate.clone().try_acquire_owned() {
        Ok(_permit) => next.run(req).await,
        Err(_) => ApiError::Busy.into_response(),
    }
}

/// Routes with admission control, CORS and the request timeout applied.
pub fn router(state: AppState, request_timeout: Duration) -> Router {
    let filter = Router::new()
        .route("/v1/filter", post(filter_endpoint))
        .route_layer(middleware::from_fn_with_state(state.clone(), admission));
    Router::new()
        .route("/v1/health", get(health_endpoint))
        .merge(filter)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(TimeoutLayer::with_status_code(
            StatusCode::REQUEST_TIMEOUT,
            request_timeout,
        ))
        .layer(
            CorsLayer::new()
                .allow_origin(Any)
                .allow_methods(Any)
                .allow_headers(Any),
        )
        .with_state(state)
}

/// A bound listener with its loaded model, not yet accepting.
pub struct Server {
    listener: TcpListener,
    app: Router,
    state: AppState,
}

impl Server {
    /// Loads the model, then binds. Nothing is accepted until `run`.
    pub async fn bind(cfg: &ServerConfig) -> Result<Self, ServeError> {
        if cfg.max_concurrent_requests == 0 {
            return Err(ServeError::Config("max_concurrent_requests must be >= 1".into()));
        }
        let model = LoadedModel::from_config(cfg)?;
        tracing::info!(model_id = %model.model_id, path = %cfg.model_path.display(), "model loaded");
        let state = AppState::new(Some(model), cfg.max_comments, cfg.max_concurrent_requests);
        Self::bind_with_state(cfg.listen, state, cfg.request_timeout).await
    }

    pub async fn bind_with_state(
        addr: SocketAddr,
        state: AppState,
        request_timeout: Duration,
    ) -> Result<Self, ServeError> {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| ServeError::Bind { addr, source })?;
        Ok(Self {
            listener,
            app: router(state.clone(), request_timeout),
            state,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Serves until `shutdown` resolves, then stops accepting and waits for
    /// in-flight requests to finish.
    pub async fn run_until<F>(self, shutdown: F) -> std::io::Result<()>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        if let Ok(addr) = self.listener.local_addr() {
            tracing::info!(%addr, "listening");
        }
        axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await
    }
}

/// Loads the model, binds, and serves until Ctrl-C or SIGTERM.
pub async fn serve(cfg: ServerConfig) -> Result<(), ServeError> {
    let server = Server::bind(&cfg).await?;
    server.run_until(shutdown_signal()).await?;
    tracing::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
