//! Blocking HTTP client for the service.
//!
//! Used by the CLI and by the historical loader when it runs against a
//! remote service. Not usable from inside an async runtime.

use std::time::Duration;

use provsvc_core::{IngestEnvelope, QueryRequest, QueryResult, WorkflowSpec};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use crate::ingest::{IngestJob, JobId, JobStatus};
use crate::loader::{SubmitError, Submitter};
use crate::service::{Accepted, ErrorBody, Health, QueryOptions, Registered};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("queue full: {0}")]
    QueueFull(String),
    /// Non-success status; `body` is the raw response text.
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
}

impl ClientError {
    /// The `error` code of a JSON error body, if any.
    pub fn code(&self) -> Option<String> {
        match self {
            ClientError::Status { body, .. } => serde_json::from_str::<ErrorBody>(body)
                .ok()
                .map(|b| b.error),
            _ => None,
        }
    }
}

pub struct ServiceClient {
    base: String,
    http: Client,
}

impl ServiceClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let body = resp.text().unwrap_or_default();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(ClientError::QueueFull(body));
        }
        Err(ClientError::Status {
            status: status.as_u16(),
            body,
        })
    }

    pub fn register_spec(&self, spec: &WorkflowSpec) -> Result<Registered, ClientError> {
        let resp = self
            .http
            .post(format!("{}/workflows", self.base))
            .json(spec)
            .send()?;
        Self::decode(resp)
    }

    pub fn submit(&self, env: &IngestEnvelope) -> Result<JobId, ClientError> {
        let resp = self
            .http
            .post(format!("{}/provenance", self.base))
            .json(env)
            .send()?;
        Self::decode::<Accepted>(resp).map(|a| a.job_id)
    }

    pub fn submit_batch(&self, envs: &[IngestEnvelope]) -> Result<JobId, ClientError> {
        let resp = self
            .http
            .post(format!("{}/provenance", self.base))
            .json(envs)
            .send()?;
        Self::decode::<Accepted>(resp).map(|a| a.job_id)
    }

    pub fn job(&self, job_id: &str) -> Result<IngestJob, ClientError> {
        let resp = self
            .http
            .get(format!("{}/jobs/{job_id}", self.base))
            .send()?;
        Self::decode(resp)
    }

    /// Polls until the job reaches a terminal status or `timeout` elapses.
    pub fn wait_job(&self, job_id: &str, timeout: Duration) -> Result<IngestJob, ClientError> {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let job = self.job(job_id)?;
            if job.status.is_terminal() || std::time::Instant::now() >= deadline {
                return Ok(job);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    pub fn query(&self, req: &QueryRequest, opts: &QueryOptions) -> Result<QueryResult, ClientError> {
        let mut opts = opts.clone();
        opts.max_depth = opts.max_depth.or(req.max_depth);
        opts.order_by = opts.order_by.or_else(|| req.order_by_attribute.clone());
        self.query_path(&req.to_path(), &opts)
    }

    /// Sends a raw query path, e.g. for paths the typed request cannot express.
    pub fn query_path(&self, path: &str, opts: &QueryOptions) -> Result<QueryResult, ClientError> {
        let qs = opts.to_query_string();
        let url = if qs.is_empty() {
            format!("{}{path}", self.base)
        } else {
            format!("{}{path}?{qs}", self.base)
        };
        Self::decode(self.http.get(url).send()?)
    }

    pub fn health(&self) -> Result<Health, ClientError> {
        Self::decode(self.http.get(format!("{}/health", self.base)).send()?)
    }
}

impl Submitter for ServiceClient {
    fn submit(&self, env: &IngestEnvelope) -> Result<JobId, SubmitError> {
        ServiceClient::submit(self, env).map_err(|e| match e {
            ClientError::QueueFull(_) => SubmitError::QueueFull,
            ClientError::Transport(t) => SubmitError::Transport(t.to_string()),
            other => SubmitError::Rejected(other.to_string()),
        })
    }

    fn poll(&self, job_id: &str) -> Result<(JobStatus, Option<String>), SubmitError> {
        self.job(job_id)
            .map(|j| (j.status, j.failure_reason))
            .map_err(|e| match e {
                ClientError::Transport(t) => SubmitError::Transport(t.to_string()),
                other => SubmitError::Rejected(other.to_string()),
            })
    }
}
