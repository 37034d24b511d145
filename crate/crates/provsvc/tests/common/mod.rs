#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use provsvc::config::ServiceConfig;
use provsvc::service::{router, Engine, WorkerHandle};
use provsvc_core::{Direction, IngestEnvelope};
use tokio::sync::oneshot;

/// Service on an ephemeral port, running on its own runtime thread.
pub struct TestServer {
    pub url: String,
    pub engine: Arc<Engine>,
    worker: Option<WorkerHandle>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start() -> Self {
        Self::with_config(ServiceConfig::default(), true)
    }

    /// `with_worker = false` leaves the queue undrained, for backpressure
    /// and status tests.
    pub fn with_config(config: ServiceConfig, with_worker: bool) -> Self {
        let engine = Arc::new(Engine::new(&config).expect("engine"));
        let worker = with_worker.then(|| engine.spawn_worker());
        let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("bind");
        listener.set_nonblocking(true).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(engine.clone());
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        Self {
            url,
            engine,
            worker,
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn wait_idle(&self) {
        assert!(
            self.engine.ingestor.wait_idle(Duration::from_secs(30)),
            "ingestion queue did not drain"
        );
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        if let Some(w) = self.worker.take() {
            w.shutdown(Duration::from_secs(5));
        }
    }
}

/// Reachability computed straight from envelopes by fixpoint closure, with
/// nodes named by strings rather than digest ids.
pub struct EnvelopeOracle {
    /// `kind:type:identity` for entities, `A:exec:task` for activities.
    succ: BTreeMap<String, BTreeSet<String>>,
}

fn entity_key(type_label: &str, identity: &str) -> String {
    format!("E:{type_label}:{identity}")
}

impl EnvelopeOracle {
    pub fn new(envelopes: &[IngestEnvelope]) -> Self {
        let mut succ: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for env in envelopes {
            let act = format!("A:{}:{}", env.workflow_execution_id, env.task_id);
            succ.entry(act.clone()).or_default();
            for u in &env.used {
                succ.entry(entity_key(&u.type_label, &u.identity))
                    .or_default()
                    .insert(act.clone());
            }
            for g in &env.generated {
                let k = entity_key(&g.type_label, &g.identity);
                succ.entry(k.clone()).or_default();
                succ.get_mut(&act).unwrap().insert(k);
            }
            for d in &env.derived {
                let to = entity_key(&d.to.type_label, &d.to.identity);
                succ.entry(to.clone()).or_default();
                succ.entry(entity_key(&d.from.type_label, &d.from.identity))
                    .or_default()
                    .insert(to);
            }
        }
        Self { succ }
    }

    fn closure(&self, start: &str, direction: Direction) -> BTreeSet<String> {
        let edges: Vec<(&String, &String)> = self
            .succ
            .iter()
            .flat_map(|(a, bs)| bs.iter().map(move |b| (a, b)))
            .map(|(a, b)| match direction {
                Direction::Forward => (a, b),
                Direction::Backward => (b, a),
            })
            .collect();
        let mut reach: BTreeSet<String> = BTreeSet::new();
        if !self.succ.contains_key(start) {
            return reach;
        }
        reach.insert(start.to_string());
        loop {
            let before = reach.len();
            for (a, b) in &edges {
                if reach.contains(*a) {
                    reach.insert((*b).clone());
                }
            }
            if reach.len() == before {
                return reach;
            }
        }
    }

    /// Identities of `target_type` entities reachable from any seed.
    pub fn targets(
        &self,
        seed_type: &str,
        seeds: &[&str],
        direction: Direction,
        target_type: &str,
    ) -> BTreeSet<String> {
        let prefix = format!("E:{target_type}:");
        seeds
            .iter()
            .flat_map(|s| self.closure(&entity_key(seed_type, s), direction))
            .filter_map(|k| k.strip_prefix(&prefix).map(str::to_string))
            .collect()
    }
}
