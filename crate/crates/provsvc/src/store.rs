//! Snapshot-publishing graph store with an optional append-only delta log.
//!
//! Readers load the current `Arc<Snapshot>` through an [`ArcSwap`] and never
//! take a lock. Writers are serialized by a mutex; each batch is built on a
//! private copy of the persistent graph and published with a single pointer
//! swap, so a batch is either entirely visible or not at all.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use provsvc_core::{GraphDelta, GraphError, GraphStats, Snapshot};
use tracing::warn;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("persistence log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("persistence log {path} line {line}: {reason}")]
    Replay {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

struct DeltaLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DeltaLog {
    fn append(&mut self, delta: &GraphDelta) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, delta)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}

pub struct GraphStore {
    current: ArcSwap<Snapshot>,
    writer: Mutex<Option<DeltaLog>>,
}

impl Default for GraphStore {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphStore {
    pub fn new() -> Self {
        Self {
            current: ArcSwap::from_pointee(Snapshot::empty()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) a delta log, replays it, and appends every
    /// later batch to it. A torn final line from an interrupted write is
    /// dropped; corruption anywhere else is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let log_err = |source| StoreError::Log {
            path: path.clone(),
            source,
        };

        let mut snap = Snapshot::empty();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(log_err)?);
            let lines: Vec<String> = reader
                .lines()
                .collect::<Result<_, _>>()
                .map_err(log_err)?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let delta: GraphDelta = match serde_json::from_str(line) {
                    Ok(d) => d,
                    Err(e) if i + 1 == last => {
                        warn!(path = %path.display(), line = i + 1, "dropping torn log tail: {e}");
                        break;
                    }
                    Err(e) => {
                        return Err(StoreError::Replay {
                            path,
                            line: i + 1,
                            reason: e.to_string(),
                        })
                    }
                };
                snap = snap.apply(&delta).map_err(|e| StoreError::Replay {
                    path: path.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            }
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(log_err)?;
        Ok(Self {
            current: ArcSwap::from_pointee(snap),
            writer: Mutex::new(Some(DeltaLog {
                path,
                out: BufWriter::new(file),
            })),
        })
    }

    /// Latest fully applied epoch. Never blocks on a writer.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.load_full()
    }

    pub fn stats(&self) -> GraphStats {
        self.current.load().stats()
    }

    /// Applies `delta` atomically and returns the epoch at which it is
    /// visible. Batches that change nothing return the current epoch.
    pub fn apply_batch(&self, delta: &GraphDelta) -> Result<u64, StoreError> {
        let mut writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let base = self.current.load_full();
        let next = base.apply(delta)?;
        if next.epoch() == base.epoch() {
            return Ok(base.epoch());
        }
        if let Some(log) = writer.as_mut() {
            log.append(delta).map_err(|source| StoreError::Log {
                path: log.path.clone(),
                source,
            })?;
        }
        let epoch = next.epoch();
        self.current.store(Arc::new(next));
        Ok(epoch)
    }
}
