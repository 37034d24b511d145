//! Timed bulk loading of historical provenance records.
//!
//! Records are newline-delimited JSON envelopes. They are cut into batches of
//! `batch_size` lines; each batch is submitted in one burst and bursts are
//! separated by `interval`. Submission goes through the same queue as live
//! ingestion, either in process or over HTTP (see [`Submitter`]).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use provsvc_core::IngestEnvelope;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ingest::{IngestError, Ingestor, JobId, JobStatus};

/// Attribute set on envelopes whose timestamps were synthesized by the loader.
pub const SYNTHETIC_TIME_ATTR: &str = "synthetic_time";

const QUEUE_RETRY_DELAY: Duration = Duration::from_millis(5);
const ADMISSION_TIMEOUT: Duration = Duration::from_secs(60);
const STATUS_POLL: Duration = Duration::from_millis(10);
const COMPLETION_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoricalLoadPlan {
    pub source: PathBuf,
    pub batch_size: usize,
    #[serde(with = "millis")]
    pub interval: Duration,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineFailure {
    /// 1-based line number in the source file.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    /// Records (lines) covered by this submission, including malformed ones.
    pub records: usize,
    /// Start of the submission, in milliseconds since the load began.
    pub offset_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub total: usize,
    pub persisted: usize,
    pub failed: usize,
    pub failures: Vec<LineFailure>,
    pub submissions: Vec<Submission>,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    SourceUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("queue full")]
    QueueFull,
    #[error("{0}")]
    Rejected(String),
    #[error("transport: {0}")]
    Transport(String),
}

/// Where the loader sends envelopes and polls job outcomes.
pub trait Submitter {
    fn submit(&self, env: &IngestEnvelope) -> Result<JobId, SubmitError>;

    /// Current status and failure reason of a job.
    fn poll(&self, job_id: &str) -> Result<(JobStatus, Option<String>), SubmitError>;
}

impl Submitter for Ingestor {
    fn submit(&self, env: &IngestEnvelope) -> Result<JobId, SubmitError> {
        self.enqueue(env.clone()).map_err(|e| match e {
            IngestError::QueueFull(_) => SubmitError::QueueFull,
            other => SubmitError::Rejected(other.to_string()),
        })
    }

    fn poll(&self, job_id: &str) -> Result<(JobStatus, Option<String>), SubmitError> {
        self.job_status(job_id)
            .map(|j| (j.status, j.failure_reason))
            .map_err(|e| SubmitError::Rejected(e.to_string()))
    }
}

impl<S: Submitter + ?Sized> Submitter for Arc<S> {
    fn submit(&self, env: &IngestEnvelope) -> Result<JobId, SubmitError> {
        (**self).submit(env)
    }

    fn poll(&self, job_id: &str) -> Result<(JobStatus, Option<String>), SubmitError> {
        (**self).poll(job_id)
    }
}

/// Parses one record. Missing `started_at`/`ended_at` are filled with
/// `synthetic` and the envelope is flagged with [`SYNTHETIC_TIME_ATTR`].
pub fn parse_record(line: &str, synthetic: DateTime<Utc>) -> Result<IngestEnvelope, String> {
    let mut value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| "record is not a JSON object".to_string())?;
    let mut synthesized = false;
    for key in ["started_at", "ended_at"] {
        if obj.get(key).is_none_or(Value::is_null) {
            obj.insert(key.into(), Value::String(synthetic.to_rfc3339()));
            synthesized = true;
        }
    }
    if synthesized {
        let attrs = obj
            .entry("attributes")
            .or_insert_with(|| Value::Object(Default::default()));
        if let Some(map) = attrs.as_object_mut() {
            map.insert(SYNTHETIC_TIME_ATTR.into(), Value::Bool(true));
        }
    }
    serde_json::from_value(value).map_err(|e| e.to_string())
}

pub fn load_historical(
    plan: &HistoricalLoadPlan,
    submitter: &dyn Submitter,
) -> Result<LoadReport, LoadError> {
    if plan.batch_size == 0 {
        return Err(LoadError::InvalidBatchSize);
    }
    let unreadable = |source| LoadError::SourceUnreadable {
        path: plan.source.clone(),
        source,
    };
    let reader = BufReader::new(File::open(&plan.source).map_err(unreadable)?);
    let mut records: Vec<(usize, String)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(unreadable)?;
        if !line.trim().is_empty() {
            records.push((i + 1, line));
        }
    }

    let start = Instant::now();
    let clock_base = Utc::now();
    let mut report = LoadReport {
        total: records.len(),
        ..LoadReport::default()
    };
    let mut pending: BTreeMap<usize, JobId> = BTreeMap::new();
    let mut failures: BTreeMap<usize, String> = BTreeMap::new();

    let batches: Vec<&[(usize, String)]> = records.chunks(plan.batch_size).collect();
    for (b, batch) in batches.iter().enumerate() {
        if b > 0 && !plan.interval.is_zero() {
            thread::sleep(plan.interval);
        }
        report.submissions.push(Submission {
            records: batch.len(),
            offset_ms: start.elapsed().as_secs_f64() * 1000.0,
        });
        for (line_no, line) in batch.iter() {
            // strictly increasing per line, so synthetic times are monotonic
            let synthetic = clock_base + chrono::Duration::microseconds(*line_no as i64);
            let env = match parse_record(line, synthetic) {
                Ok(env) => env,
                Err(reason) => {
                    failures.insert(*line_no, format!("malformed-record: {reason}"));
                    continue;
                }
            };
            match submit_with_retry(submitter, &env) {
                Ok(job) => {
                    pending.insert(*line_no, job);
                }
                Err(e) => {
                    failures.insert(*line_no, format!("submit-failed: {e}"));
                }
            }
        }
    }

    let deadline = Instant::now() + COMPLETION_TIMEOUT;
    while !pending.is_empty() {
        let mut done = Vec::new();
        for (line_no, job) in &pending {
            match submitter.poll(job) {
                Ok((JobStatus::Persisted, _)) => {
                    report.persisted += 1;
                    done.push(*line_no);
                }
                Ok((JobStatus::Failed, reason)) => {
                    failures.insert(*line_no, reason.unwrap_or_else(|| "failed".into()));
                    done.push(*line_no);
                }
                Ok(_) | Err(SubmitError::Transport(_)) => {}
                Err(e) => {
                    failures.insert(*line_no, format!("status-unavailable: {e}"));
                    done.push(*line_no);
                }
            }
        }
        for line_no in done {
            pending.remove(&line_no);
        }
        if pending.is_empty() {
            break;
        }
        if Instant::now() >= deadline {
            for line_no in pending.keys() {
                failures.insert(*line_no, "timeout: job did not complete".into());
            }
            break;
        }
        thread::sleep(STATUS_POLL);
    }

    report.failed = failures.len();
    report.failures = failures
        .into_iter()
        .map(|(line, reason)| LineFailure { line, reason })
        .collect();
    Ok(report)
}

fn submit_with_retry(submitter: &dyn Submitter, env: &IngestEnvelope) -> Result<JobId, SubmitError> {
    let deadline = Instant::now() + ADMISSION_TIMEOUT;
    loop {
        match submitter.submit(env) {
            Err(SubmitError::QueueFull) if Instant::now() < deadline => {
                thread::sleep(QUEUE_RETRY_DELAY)
            }
            other => return other,
        }
    }
}
