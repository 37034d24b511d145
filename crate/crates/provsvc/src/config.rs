//! Service configuration.
//!
//! A TOML file with flat keys, every key optional:
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! queue_capacity = 10000
//! worker_max_batch = 256
//! worker_poll_interval_ms = 20
//! persistence_log = "/var/lib/provsvc/graph.log"
//! status_retention = 100000
//! shutdown_timeout_ms = 10000
//! ```
//!
//! Each key can be overridden by an environment variable named `PROVSVC_`
//! plus the upper-cased key, e.g. `PROVSVC_QUEUE_CAPACITY=500`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ingest::IngestConfig;

pub const ENV_PREFIX: &str = "PROVSVC_";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub queue_capacity: usize,
    pub worker_max_batch: usize,
    pub worker_poll_interval_ms: u64,
    pub persistence_log: Option<PathBuf>,
    pub status_retention: usize,
    pub shutdown_timeout_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let ingest = IngestConfig::default();
        Self {
            listen: "127.0.0.1:8080".into(),
            queue_capacity: ingest.capacity,
            worker_max_batch: ingest.max_batch,
            worker_poll_interval_ms: ingest.poll_interval.as_millis() as u64,
            persistence_log: None,
            status_retention: ingest.retention,
            shutdown_timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for {key}: `{value}`")]
    Env { key: String, value: String },
    #[error("{0} must be at least 1")]
    Range(&'static str),
}

impl ServiceConfig {
    /// Reads `path` (if given) and applies `PROVSVC_*` overrides from the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?),
            None => None,
        };
        Self::from_sources(text.as_deref(), |k| std::env::var(k).ok())
    }

    pub fn from_sources(
        file: Option<&str>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut cfg: ServiceConfig = match file {
            Some(text) => toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?,
            None => ServiceConfig::default(),
        };

        fn parsed<T: std::str::FromStr>(key: &str, value: String) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::Env {
                key: key.to_string(),
                value,
            })
        }
        let var = |name: &str| {
            let key = format!("{ENV_PREFIX}{name}");
            env(&key).map(|v| (key, v))
        };

        if let Some((_, v)) = var("LISTEN") {
            cfg.listen = v;
        }
        if let Some((k, v)) = var("QUEUE_CAPACITY") {
            cfg.queue_capacity = parsed(&k, v)?;
        }
        if let Some((k, v)) = var("WORKER_MAX_BATCH") {
            cfg.worker_max_batch = parsed(&k, v)?;
        }
        if let Some((k, v)) = var("WORKER_POLL_INTERVAL_MS") {
            cfg.worker_poll_interval_ms = parsed(&k, v)?;
        }
        if let Some((_, v)) = var("PERSISTENCE_LOG") {
            cfg.persistence_log = (!v.is_empty()).then(|| PathBuf::from(v));
        }
        if let Some((k, v)) = var("STATUS_RETENTION") {
            cfg.status_retention = parsed(&k, v)?;
        }
        if let Some((k, v)) = var("SHUTDOWN_TIMEOUT_MS") {
            cfg.shutdown_timeout_ms = parsed(&k, v)?;
        }

        if cfg.queue_capacity == 0 {
            return Err(ConfigError::Range("queue_capacity"));
        }
        if cfg.worker_max_batch == 0 {
            return Err(ConfigError::Range("worker_max_batch"));
        }
        Ok(cfg)
    }

    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            capacity: self.queue_capacity,
            max_batch: self.worker_max_batch,
            retention: self.status_retention,
            poll_interval: Duration::from_millis(self.worker_poll_interval_ms.max(1)),
        }
    }

    pub fn shutdown_timeout(&self) -> Duration {
        Duration::from_millis(self.shutdown_timeout_ms)
    }
}
