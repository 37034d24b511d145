//! HTTP facade.
//!
//! | method | path                         | result                          |
//! |--------|------------------------------|---------------------------------|
//! | POST   | `/workflows`                 | `{name, version}`               |
//! | POST   | `/provenance`                | `202 {job_id}`                  |
//! | GET    | `/jobs/{job_id}`             | job record                      |
//! | GET    | `/provenance/seeds/...`      | query result                    |
//! | GET    | `/health`                    | `{status, epoch, queue_depth}`  |
//!
//! Queries run on the snapshot current at request start; ingestion only
//! enqueues, so the two sides share nothing but the queue and the snapshot
//! pointer.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{OriginalUri, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use provsvc_core::{
    parse_query_path, traverse, IngestEnvelope, OrderBy, QueryError, QueryRequest, QueryResult,
    SortOrder, WorkflowSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ServiceConfig;
use crate::ingest::{IngestError, Ingestor};
use crate::registry::SpecRegistry;
use crate::store::{GraphStore, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registered {
    pub name: String,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accepted {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub epoch: u64,
    pub queue_depth: usize,
    pub node_count: usize,
    pub edge_count: usize,
}

/// Error body shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

/// Query-string options layered on top of a parsed path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOptions {
    pub max_depth: Option<u32>,
    pub order_by: Option<OrderBy>,
    pub include_paths: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            max_depth: None,
            order_by: None,
            include_paths: true,
        }
    }
}

impl QueryOptions {
    pub fn from_params(params: &HashMap<String, String>) -> Result<Self, String> {
        let mut opts = QueryOptions::default();
        if let Some(v) = params.get("max_depth") {
            match v.parse::<u32>() {
                Ok(d) if d >= 1 => opts.max_depth = Some(d),
                _ => return Err(format!("max_depth must be a positive integer, got `{v}`")),
            }
        }
        let order = match params.get("order").map(String::as_str) {
            None | Some("asc") => SortOrder::Asc,
            Some("desc") => SortOrder::Desc,
            Some(other) => return Err(format!("order must be asc or desc, got `{other}`")),
        };
        if let Some(attr) = params.get("order_by") {
            if attr.is_empty() {
                return Err("order_by must name an attribute".into());
            }
            opts.order_by = Some(OrderBy {
                attribute: attr.clone(),
                order,
            });
        }
        if let Some(v) = params.get("include_paths") {
            opts.include_paths = match v.as_str() {
                "true" | "1" => true,
                "false" | "0" => false,
                _ => return Err(format!("include_paths must be true or false, got `{v}`")),
            };
        }
        Ok(opts)
    }

    /// Renders the options as a query string (without the leading `?`).
    pub fn to_query_string(&self) -> String {
        let mut parts = Vec::new();
        if let Some(d) = self.max_depth {
            parts.push(format!("max_depth={d}"));
        }
        if let Some(o) = &self.order_by {
            let attr: String = url_escape(&o.attribute);
            parts.push(format!("order_by={attr}"));
            parts.push(
                match o.order {
                    SortOrder::Asc => "order=asc",
                    SortOrder::Desc => "order=desc",
                }
                .into(),
            );
        }
        if !self.include_paths {
            parts.push("include_paths=false".into());
        }
        parts.join("&")
    }

    pub fn apply(&self, req: &mut QueryRequest) {
        req.max_depth = self.max_depth;
        req.order_by_attribute = self.order_by.clone();
    }
}

fn url_escape(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                (b as char).to_string()
            }
            _ => format!("%{b:02X}"),
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// The wired-together store, spec registry and ingestion queue.
pub struct Engine {
    pub store: Arc<GraphStore>,
    pub registry: Arc<SpecRegistry>,
    pub ingestor: Arc<Ingestor>,
}

impl Engine {
    pub fn new(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let store = Arc::new(match &config.persistence_log {
            Some(path) => GraphStore::open(path)?,
            None => GraphStore::new(),
        });
        let registry = Arc::new(SpecRegistry::new());
        let ingestor = Arc::new(Ingestor::new(
            store.clone(),
            registry.clone(),
            config.ingest(),
        ));
        Ok(Self {
            store,
            registry,
            ingestor,
        })
    }

    pub fn query(&self, path: &str, opts: &QueryOptions) -> Result<QueryResult, QueryError> {
        let mut req = parse_query_path(path)?;
        opts.apply(&mut req);
        let snapshot = self.store.snapshot();
        let mut result = traverse(&snapshot, &req);
        if !opts.include_paths {
            result.paths.clear();
        }
        Ok(result)
    }

    pub fn health(&self) -> Health {
        let stats = self.store.stats();
        Health {
            status: "ok".into(),
            epoch: stats.epoch,
            queue_depth: self.ingestor.queue_depth(),
            node_count: stats.node_count,
            edge_count: stats.edge_count,
        }
    }

    /// Starts the single ingestion worker on its own thread.
    pub fn spawn_worker(&self) -> WorkerHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let ingestor = self.ingestor.clone();
        let thread = {
            let (ingestor, stop) = (ingestor.clone(), stop.clone());
            std::thread::Builder::new()
                .name("provsvc-ingest".into())
                .spawn(move || ingestor.run(&stop))
                .expect("spawn ingestion worker")
        };
        WorkerHandle {
            stop,
            ingestor,
            thread: Some(thread),
        }
    }
}

pub struct WorkerHandle {
    stop: Arc<AtomicBool>,
    ingestor: Arc<Ingestor>,
    thread: Option<JoinHandle<()>>,
}

impl WorkerHandle {
    /// Lets the worker drain the queue for up to `timeout`, then stops it.
    /// Returns whether the queue was fully drained.
    pub fn shutdown(mut self, timeout: Duration) -> bool {
        let drained = self.ingestor.wait_idle(timeout);
        if !drained {
            tracing::warn!(
                remaining = self.ingestor.queue_depth(),
                "shutdown timeout reached with jobs still queued"
            );
        }
        self.halt();
        drained
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.ingestor.wake();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        self.halt();
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/workflows", post(register_workflow))
        .route("/provenance", post(ingest))
        .route("/provenance/{*rest}", get(query))
        .route("/jobs/{job_id}", get(job_status))
        .route("/health", get(health))
        .with_state(engine)
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: code.into(),
            message: message.into(),
        }),
    )
        .into_response()
}

async fn register_workflow(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let spec: WorkflowSpec = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, "malformed-body", e.to_string()),
    };
    let name = spec.name.clone();
    match engine.registry.register(spec) {
        Ok(version) => Json(Registered { name, version }).into_response(),
        Err(report) => (StatusCode::BAD_REQUEST, Json(report)).into_response(),
    }
}

async fn ingest(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::BAD_REQUEST, "malformed-body", e.to_string()),
    };
    let admitted = if value.is_array() {
        match serde_json::from_value::<Vec<IngestEnvelope>>(value) {
            Ok(envs) => engine.ingestor.enqueue_batch(envs),
            Err(e) => return error(StatusCode::BAD_REQUEST, "malformed-body", e.to_string()),
        }
    } else {
        match serde_json::from_value::<IngestEnvelope>(value) {
            Ok(env) => engine.ingestor.enqueue(env),
            Err(e) => return error(StatusCode::BAD_REQUEST, "malformed-body", e.to_string()),
        }
    };
    match admitted {
        Ok(job_id) => (StatusCode::ACCEPTED, Json(Accepted { job_id })).into_response(),
        Err(e @ IngestError::QueueFull(_)) => {
            let mut resp = error(StatusCode::TOO_MANY_REQUESTS, "queue-full", e.to_string());
            resp.headers_mut()
                .insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
            resp
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

async fn job_status(State(engine): State<Arc<Engine>>, Path(job_id): Path<String>) -> Response {
    match engine.ingestor.job_status(&job_id) {
        Ok(job) => Json(job).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, "unknown-job", e.to_string()),
    }
}

async fn query(
    State(engine): State<Arc<Engine>>,
    OriginalUri(uri): OriginalUri,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let opts = match QueryOptions::from_params(&params) {
        Ok(o) => o,
        Err(msg) => return error(StatusCode::BAD_REQUEST, "invalid-parameter", msg),
    };
    let path = uri.path().to_string();
    let result = tokio::task::spawn_blocking(move || engine.query(&path, &opts)).await;
    match result {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e @ QueryError::MalformedPath(_))) => {
            error(StatusCode::BAD_REQUEST, "malformed-path", e.to_string())
        }
        Ok(Err(e @ QueryError::InvalidDirection(_))) => {
            error(StatusCode::BAD_REQUEST, "invalid-direction", e.to_string())
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

async fn health(State(engine): State<Arc<Engine>>) -> Json<Health> {
    Json(engine.health())
}

/// Runs the service on `config.listen` until `shutdown` resolves, then
/// drains the ingestion queue within the configured timeout.
pub async fn serve(
    config: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
    serve_on(listener, config, shutdown).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let engine = Arc::new(Engine::new(&config)?);
    let worker = engine.spawn_worker();
    tracing::info!(addr = %listener.local_addr()?, "provenance service listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(shutdown)
        .await?;
    let timeout = config.shutdown_timeout();
    let drained = tokio::task::spawn_blocking(move || worker.shutdown(timeout))
        .await
        .unwrap_or(false);
    tracing::info!(drained, "provenance service stopped");
    Ok(())
}

/// Path of the persistence log, if configured, for diagnostics.
pub fn describe(config: &ServiceConfig) -> String {
    let log = config
        .persistence_log
        .as_deref()
        .map_or_else(|| "none".to_string(), |p| p.display().to_string());
    format!(
        "listen={} queue_capacity={} worker_max_batch={} persistence_log={}",
        config.listen, config.queue_capacity, config.worker_max_batch, log
    )
}
