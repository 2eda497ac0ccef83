//! HTTP surface over a shared, immutable [`Engine`].

use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use artsearch_core::encoder::{EncoderDims, EncoderError};
use artsearch_core::engine::{Engine, EngineError, Query, RankedResult};
use artsearch_core::store::{Corpus, Side, StoreError};
use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query as UrlQuery, Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::config::{ConfigError, ServiceConfig};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("encoder setup failed: {0}")]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("loading stores failed: {0}")]
    Load(#[from] LoadError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
    #[error("background task failed: {0}")]
    Task(String),
}

/// Opens the stores named by `config` and wires up the configured encoder.
pub fn load_engine(config: &ServiceConfig) -> Result<Engine, LoadError> {
    config.validate()?;
    let (manifest, corpus) = Corpus::open(&config.manifest)?;
    let dims = EncoderDims {
        global: manifest.global_dim,
        local: manifest.local_dim,
    };
    let encoder = config.encoder.build(dims)?;
    Ok(Engine::new(
        corpus,
        config.fusion_for(manifest.default_fusion_weight),
        encoder,
    )?)
}

/// Shared request state. The engine slot fills once loading finishes.
pub struct AppState {
    config: ServiceConfig,
    engine: OnceLock<Arc<Engine>>,
    load_error: OnceLock<String>,
    started: Instant,
    permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let permits = Arc::new(Semaphore::new(config.worker_count()));
        Arc::new(Self {
            config,
            engine: OnceLock::new(),
            load_error: OnceLock::new(),
            started: Instant::now(),
            permits,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Makes the engine visible to handlers. Later calls are ignored.
    pub fn install(&self, engine: Engine) {
        let _ = self.engine.set(Arc::new(engine));
    }

    pub fn fail(&self, reason: impl Into<String>) {
        let _ = self.load_error.set(reason.into());
    }

    pub fn engine(&self) -> Option<&Arc<Engine>> {
        self.engine.get()
    }

    fn ready(&self) -> Result<Arc<Engine>, ApiError> {
        self.engine.get().cloned().ok_or_else(|| {
            ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "stores are not loaded yet")
        })
    }

    fn resolve_k(&self, k: Option<usize>) -> Result<usize, ApiError> {
        let k = k.unwrap_or(self.config.default_k);
        if k == 0 || k > self.config.max_k {
            return Err(ApiError::bad_request(format!(
                "k must be between 1 and {}, got {k}",
                self.config.max_k
            )));
        }
        Ok(k)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::Encoder(EncoderError::Undecodable(_)) => {
                StatusCode::UNSUPPORTED_MEDIA_TYPE
            }
            EngineError::Encoder(EncoderError::EmptyInput) | EngineError::InvalidQuery(_) => {
                StatusCode::BAD_REQUEST
            }
            EngineError::Encoder(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreJson {
    pub global: f64,
    pub local: f64,
    pub fused: f64,
}

/// One ranked hit as returned by both search endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub rank: usize,
    pub item_id: usize,
    pub external_id: String,
    pub score: ScoreJson,
    pub description: String,
    pub image_uri: String,
    pub source_url: String,
}

impl From<RankedResult> for SearchResult {
    fn from(r: RankedResult) -> Self {
        Self {
            rank: r.rank,
            item_id: r.breakdown.item_id,
            external_id: r.entry.external_id,
            score: ScoreJson {
                global: r.breakdown.global_score,
                local: r.breakdown.local_score,
                fused: r.breakdown.fused_score,
            },
            description: r.entry.description,
            image_uri: r.entry.image_uri,
            source_url: r.entry.source_url,
        }
    }
}

#[derive(Debug, Deserialize)]
struct TextSearch {
    query: String,
    #[serde(default)]
    k: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct KParam {
    #[serde(default)]
    k: Option<usize>,
}

async fn run_search(
    state: &AppState,
    engine: Arc<Engine>,
    query: Query,
) -> Result<Json<Vec<SearchResult>>, ApiError> {
    let _permit = state
        .permits
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting down"))?;
    let results = tokio::task::spawn_blocking(move || engine.search(&query))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(results.into_iter().map(SearchResult::from).collect()))
}

async fn search_text(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<Vec<SearchResult>>, ApiError> {
    let engine = state.ready()?;
    let req: TextSearch = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query must not be empty"));
    }
    let limit = state.config.max_query_bytes;
    if req.query.len() > limit {
        return Err(ApiError::bad_request(format!(
            "query is {} bytes; the limit is {limit} bytes",
            req.query.len()
        )));
    }
    let k = state.resolve_k(req.k)?;
    let query = Query::text(req.query, k)?;
    run_search(&state, engine, query).await
}

async fn search_image(
    State(state): State<Arc<AppState>>,
    UrlQuery(params): UrlQuery<KParam>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<Vec<SearchResult>>, ApiError> {
    let engine = state.ready()?;
    let mut multipart =
        multipart.map_err(|e| ApiError::bad_request(format!("expected a multipart form: {e}")))?;
    let limit = state.config.max_upload_bytes;
    let bad_form = |e: axum::extract::multipart::MultipartError| {
        ApiError::bad_request(format!("malformed multipart body: {e}"))
    };
    let mut image: Option<Vec<u8>> = None;
    let mut k = params.k;
    while let Some(mut field) = multipart.next_field().await.map_err(bad_form)? {
        match field.name() {
            Some("image") => {
                let mut bytes = Vec::new();
                while let Some(chunk) = field.chunk().await.map_err(bad_form)? {
                    if bytes.len() + chunk.len() > limit {
                        return Err(ApiError::bad_request(format!(
                            "image exceeds the upload limit of {limit} bytes"
                        )));
                    }
                    bytes.extend_from_slice(&chunk);
                }
                image = Some(bytes);
            }
            Some("k") => {
                let text = field.text().await.map_err(bad_form)?;
                let parsed = text.trim().parse().map_err(|_| {
                    ApiError::bad_request(format!("k must be a positive integer, got {text:?}"))
                })?;
                k = Some(parsed);
            }
            _ => {
                // unknown fields are skipped without buffering
                while field.chunk().await.map_err(bad_form)?.is_some() {}
            }
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing multipart field \"image\""))?;
    if image.is_empty() {
        return Err(ApiError::bad_request("uploaded image is empty"));
    }
    let k = state.resolve_k(k)?;
    let query = Query::image(image, k)?;
    run_search(&state, engine, query).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub image_regions: usize,
    pub description_regions: usize,
    pub global_dim: usize,
    pub local_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub item_id: usize,
    pub external_id: String,
    pub description: String,
    pub image_uri: String,
    pub source_url: String,
    pub stats: ItemStats,
}

async fn get_item(
    State(state): State<Arc<AppState>>,
    Path(raw): Path<String>,
) -> Result<Json<ItemResponse>, ApiError> {
    let id: usize = raw.parse().map_err(|_| {
        ApiError::bad_request(format!(
            "item id must be a non-negative integer, got {raw:?}"
        ))
    })?;
    let engine = state.ready()?;
    let entry = engine
        .catalog()
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no item {id}")))?
        .clone();
    let regions = |side| {
        engine
            .gallery(side)
            .side()
            .local
            .row(id)
            .map(|b| b.len())
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    };
    let (global_dim, local_dim) = engine.dims();
    Ok(Json(ItemResponse {
        item_id: entry.item_id,
        external_id: entry.external_id,
        description: entry.description,
        image_uri: entry.image_uri,
        source_url: entry.source_url,
        stats: ItemStats {
            image_regions: regions(Side::Images)?,
            description_regions: regions(Side::Descriptions)?,
            global_dim,
            local_dim,
        },
    }))
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let uptime_s = state.started.elapsed().as_secs_f64();
    match state.engine() {
        Some(engine) => {
            let (global, local) = engine.dims();
            Json(json!({
                "status": "ok",
                "corpus_name": engine.name(),
                "corpus_size": engine.len(),
                "dims": { "global": global, "local": local },
                "encoder_mode": engine.encoder_mode(),
                "uptime_s": uptime_s,
            }))
            .into_response()
        }
        None => {
            let body = match state.load_error.get() {
                Some(e) => json!({ "status": "failed", "error": e, "uptime_s": uptime_s }),
                None => json!({ "status": "loading", "uptime_s": uptime_s }),
            };
            (StatusCode::SERVICE_UNAVAILABLE, Json(body)).into_response()
        }
    }
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let start = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        target: "artsearch::http",
        %method,
        path,
        status = response.status().as_u16(),
        latency_ms = start.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    response
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    if origins.is_empty() {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                tracing::warn!(origin = %o, "ignoring invalid CORS origin");
                None
            }
        })
        .collect();
    layer.allow_origin(AllowOrigin::list(list))
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/search/text", post(search_text))
        .route(
            "/search/image",
            // the handler enforces the upload cap while streaming
            post(search_image).layer(DefaultBodyLimit::disable()),
        )
        .route("/items/{id}", get(get_item))
        .route("/health", get(health));
    if let Some(dir) = &state.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let cors = cors(&state.config.cors_origins);
    app.with_state(state)
        .layer(middleware::from_fn(log_request))
        .layer(cors)
}

/// Serves `state` on `listener` until `shutdown` resolves, then drains
/// in-flight requests.
pub async fn serve_state(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Starts serving immediately (health answers 503) and loads the stores in
/// the background. A load failure stops the server and is returned.
pub async fn serve(
    config: ServiceConfig,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let state = AppState::new(config);
    let loader = {
        let state = state.clone();
        tokio::task::spawn_blocking(move || load_engine(&state.config))
    };
    let mut server = tokio::spawn(serve_state(state.clone(), listener, shutdown));
    tokio::select! {
        done = &mut server => {
            return done.map_err(|e| ServeError::Task(e.to_string()))?.map_err(Into::into);
        }
        loaded = loader => match loaded.map_err(|e| ServeError::Task(e.to_string()))? {
            Ok(engine) => {
                tracing::info!(
                    corpus = engine.name(),
                    items = engine.len(),
                    encoder = engine.encoder_mode(),
                    "stores loaded"
                );
                state.install(engine);
            }
            Err(e) => {
                state.fail(e.to_string());
                server.abort();
                return Err(e.into());
            }
        }
    }
    server
        .await
        .map_err(|e| ServeError::Task(e.to_string()))?
        .map_err(Into::into)
}

/// A server on its own runtime thread; dropped or [`stop`](Self::stop)ped
/// servers shut down gracefully.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<(), ServeError>>>,
}

impl BackgroundServer {
    /// Binds `config.listen:config.port` (port 0 picks a free one) and
    /// serves with background loading.
    pub fn start(config: ServiceConfig) -> std::io::Result<Self> {
        let addr = SocketAddr::new(config.listen, config.port);
        Self::spawn(addr, move |listener, shutdown| {
            Box::pin(async move {
                // record the port actually bound, so port 0 validates
                let mut config = config;
                config.port = listener.local_addr()?.port();
                serve(config, listener, shutdown).await
            })
        })
    }

    /// Serves a caller-managed state, e.g. one whose engine is installed
    /// later.
    pub fn with_state(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<Self> {
        Self::spawn(addr, move |listener, shutdown| {
            Box::pin(async move { Ok(serve_state(state, listener, shutdown).await?) })
        })
    }

    fn spawn<F>(addr: SocketAddr, run: F) -> std::io::Result<Self>
    where
        F: FnOnce(
                tokio::net::TcpListener,
                std::pin::Pin<Box<dyn Future<Output = ()> + Send>>,
            )
                -> std::pin::Pin<Box<dyn Future<Output = Result<(), ServeError>> + Send>>
            + Send
            + 'static,
    {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                run(
                    listener,
                    Box::pin(async move {
                        let _ = rx.await;
                    }),
                )
                .await
            })
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Requests shutdown and waits for the server's outcome.
    pub fn stop(mut self) -> Result<(), ServeError> {
        self.finish()
    }

    /// Waits for the server to exit on its own (e.g. after a load failure).
    pub fn join(mut self) -> Result<(), ServeError> {
        let thread = self.thread.take().expect("joined once");
        thread
            .join()
            .map_err(|_| ServeError::Task("server thread panicked".into()))?
    }

    fn finish(&mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| ServeError::Task("server thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}
