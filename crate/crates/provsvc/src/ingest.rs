//! Asynchronous write path.
//!
//! Producers call [`Ingestor::enqueue`], which only admits the envelope into a
//! bounded queue. A single worker drains the queue with
//! [`Ingestor::worker_step`]: it validates and expands each job against the
//! registered spec, applies all accepted deltas as one batch, and records a
//! per-job outcome that [`Ingestor::job_status`] exposes.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use provsvc_core::{
    expand_envelope, validate_envelope, GraphDelta, IngestEnvelope, NodeId, Snapshot,
    ViolationCode,
};
use serde::{Deserialize, Serialize};

use crate::registry::SpecRegistry;
use crate::store::GraphStore;

pub type JobId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Persisting,
    Persisted,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Persisted | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPayload {
    Envelope(IngestEnvelope),
    /// Applied all-or-nothing: one invalid envelope fails the job.
    Batch(Vec<IngestEnvelope>),
}

impl JobPayload {
    fn envelopes(&self) -> &[IngestEnvelope] {
        match self {
            JobPayload::Envelope(e) => std::slice::from_ref(e),
            JobPayload::Batch(b) => b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestJob {
    pub job_id: JobId,
    pub payload: JobPayload,
    pub enqueued_at: DateTime<Utc>,
    pub completed_at: Option<DateTime<Utc>>,
    pub status: JobStatus,
    pub failure_reason: Option<String>,
    /// Epoch at which the job's delta became visible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("ingestion queue is full (capacity {0}); retry later")]
    QueueFull(usize),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub capacity: usize,
    pub max_batch: usize,
    /// Terminal job records kept for status queries.
    pub retention: usize,
    pub poll_interval: Duration,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            capacity: 10_000,
            max_batch: 256,
            retention: 100_000,
            poll_interval: Duration::from_millis(20),
        }
    }
}

#[derive(Default)]
struct QueueState {
    queue: VecDeque<JobId>,
    jobs: HashMap<JobId, IngestJob>,
    /// Admission order, for retention eviction.
    order: VecDeque<JobId>,
    in_flight: usize,
}

pub struct Ingestor {
    store: Arc<GraphStore>,
    registry: Arc<SpecRegistry>,
    config: IngestConfig,
    state: Mutex<QueueState>,
    work_ready: Condvar,
    drained: Condvar,
}

impl Ingestor {
    pub fn new(store: Arc<GraphStore>, registry: Arc<SpecRegistry>, config: IngestConfig) -> Self {
        assert!(config.capacity >= 1 && config.max_batch >= 1);
        Self {
            store,
            registry,
            config,
            state: Mutex::new(QueueState::default()),
            work_ready: Condvar::new(),
            drained: Condvar::new(),
        }
    }

    pub fn store(&self) -> &Arc<GraphStore> {
        &self.store
    }

    pub fn registry(&self) -> &Arc<SpecRegistry> {
        &self.registry
    }

    pub fn config(&self) -> &IngestConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, QueueState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Admits one envelope. Never validates and never touches the graph.
    pub fn enqueue(&self, env: IngestEnvelope) -> Result<JobId, IngestError> {
        self.admit(JobPayload::Envelope(env))
    }

    pub fn enqueue_batch(&self, envs: Vec<IngestEnvelope>) -> Result<JobId, IngestError> {
        self.admit(JobPayload::Batch(envs))
    }

    fn admit(&self, payload: JobPayload) -> Result<JobId, IngestError> {
        let mut st = self.lock();
        if st.queue.len() >= self.config.capacity {
            return Err(IngestError::QueueFull(self.config.capacity));
        }
        let job_id = uuid::Uuid::new_v4().simple().to_string();
        st.jobs.insert(
            job_id.clone(),
            IngestJob {
                job_id: job_id.clone(),
                payload,
                enqueued_at: Utc::now(),
                completed_at: None,
                status: JobStatus::Queued,
                failure_reason: None,
                epoch: None,
            },
        );
        st.queue.push_back(job_id.clone());
        st.order.push_back(job_id.clone());
        drop(st);
        self.work_ready.notify_one();
        Ok(job_id)
    }

    pub fn job_status(&self, job_id: &str) -> Result<IngestJob, IngestError> {
        self.lock()
            .jobs
            .get(job_id)
            .cloned()
            .ok_or_else(|| IngestError::UnknownJob(job_id.to_string()))
    }

    pub fn queue_depth(&self) -> usize {
        self.lock().queue.len()
    }

    /// One worker pass: drains up to `max_batch` jobs, applies every valid
    /// one in a single batch and records each outcome. Returns the number of
    /// jobs processed. Must only be called from the single worker.
    pub fn worker_step(&self) -> usize {
        let batch: Vec<(JobId, JobPayload)> = {
            let mut st = self.lock();
            let n = st.queue.len().min(self.config.max_batch);
            let ids: Vec<JobId> = st.queue.drain(..n).collect();
            st.in_flight += ids.len();
            ids.into_iter()
                .map(|id| {
                    let job = st.jobs.get_mut(&id).expect("queued jobs have records");
                    job.status = JobStatus::Persisting;
                    (id, job.payload.clone())
                })
                .collect()
        };
        if batch.is_empty() {
            return 0;
        }

        let snapshot = self.store.snapshot();
        let mut accepted_nodes: HashSet<NodeId> = HashSet::new();
        let mut prepared: Vec<(JobId, Result<GraphDelta, String>)> = Vec::with_capacity(batch.len());
        for (id, payload) in batch {
            let result = self.prepare(&payload, &snapshot, &accepted_nodes);
            if let Ok(delta) = &result {
                accepted_nodes.extend(delta.nodes.iter().map(|n| n.node_id));
            }
            prepared.push((id, result));
        }

        let mut combined = GraphDelta::default();
        for (_, r) in &prepared {
            if let Ok(d) = r {
                combined.extend(d.clone());
            }
        }

        let outcomes: Vec<(JobId, Result<u64, String>)> = match self.store.apply_batch(&combined) {
            Ok(epoch) => prepared
                .into_iter()
                .map(|(id, r)| (id, r.map(|_| epoch)))
                .collect(),
            Err(e) => {
                tracing::warn!("combined batch rejected ({e}); applying jobs one at a time");
                prepared
                    .into_iter()
                    .map(|(id, r)| {
                        let r = r.and_then(|d| {
                            self.store
                                .apply_batch(&d)
                                .map_err(|e| format!("storage-error: {e}"))
                        });
                        (id, r)
                    })
                    .collect()
            }
        };

        let processed = outcomes.len();
        let now = Utc::now();
        let mut st = self.lock();
        for (id, outcome) in outcomes {
            if let Some(job) = st.jobs.get_mut(&id) {
                job.completed_at = Some(now);
                match outcome {
                    Ok(epoch) => {
                        job.status = JobStatus::Persisted;
                        job.epoch = Some(epoch);
                    }
                    Err(reason) => {
                        job.status = JobStatus::Failed;
                        job.failure_reason = Some(reason);
                    }
                }
            }
        }
        st.in_flight -= processed;
        self.evict(&mut st);
        if st.queue.is_empty() && st.in_flight == 0 {
            self.drained.notify_all();
        }
        processed
    }

    fn prepare(
        &self,
        payload: &JobPayload,
        snapshot: &Snapshot,
        accepted: &HashSet<NodeId>,
    ) -> Result<GraphDelta, String> {
        let envs = payload.envelopes();
        let label = |i: usize, msg: String| {
            if envs.len() == 1 && matches!(payload, JobPayload::Envelope(_)) {
                msg
            } else {
                format!("envelope {i}: {msg}")
            }
        };

        let mut delta = GraphDelta::default();
        for (i, env) in envs.iter().enumerate() {
            let Some(spec) = self.registry.get(&env.workflow_name) else {
                return Err(label(
                    i,
                    format!(
                        "{}: workflow `{}` is not registered",
                        ViolationCode::UnknownWorkflow,
                        env.workflow_name
                    ),
                ));
            };
            let report = validate_envelope(env, &spec);
            if !report.is_empty() {
                return Err(label(i, report.to_string()));
            }
            let d = expand_envelope(env, &spec)
                .map_err(|e| label(i, format!("{}: {e}", ViolationCode::MissingIdentity)))?;
            delta.extend(d);
        }

        let own: HashSet<NodeId> = delta.nodes.iter().map(|n| n.node_id).collect();
        let known = |id: &NodeId| {
            own.contains(id) || accepted.contains(id) || snapshot.graph().contains_node(id)
        };
        for e in &delta.edges {
            for end in [e.src, e.dst] {
                if !known(&end) {
                    return Err(format!(
                        "dangling-edge: {} edge {} references unknown node {}",
                        e.kind.as_str(),
                        e.edge_id,
                        end
                    ));
                }
            }
        }
        Ok(delta)
    }

    fn evict(&self, st: &mut QueueState) {
        while st.jobs.len() > self.config.retention {
            let Some(front) = st.order.front() else { break };
            match st.jobs.get(front) {
                Some(job) if !job.status.is_terminal() => break,
                _ => {
                    let id = st.order.pop_front().expect("front exists");
                    st.jobs.remove(&id);
                }
            }
        }
    }

    /// Worker loop; returns at the first check after `stop` is set. Callers
    /// that want a drained queue wait with [`Ingestor::wait_idle`] first.
    pub fn run(&self, stop: &AtomicBool) {
        while !stop.load(Ordering::Acquire) {
            if self.worker_step() > 0 {
                continue;
            }
            let st = self.lock();
            if st.queue.is_empty() && !stop.load(Ordering::Acquire) {
                let _ = self
                    .work_ready
                    .wait_timeout(st, self.config.poll_interval)
                    .unwrap_or_else(|p| p.into_inner());
            }
        }
    }

    /// Wakes a worker blocked in [`Ingestor::run`] so it can observe `stop`.
    pub fn wake(&self) {
        self.work_ready.notify_all();
    }

    /// Blocks until no job is queued or being persisted, or `timeout` passes.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        while !(st.queue.is_empty() && st.in_flight == 0) {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            st = self
                .drained
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
        true
    }

    /// Status counts over retained jobs, for tests and health reporting.
    pub fn status_counts(&self) -> HashMap<JobStatus, usize> {
        let st = self.lock();
        let mut counts = HashMap::new();
        for job in st.jobs.values() {
            *counts.entry(job.status).or_insert(0) += 1;
        }
        counts
    }
}
