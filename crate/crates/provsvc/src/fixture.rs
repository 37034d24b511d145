//! Synthetic shale-reservoir lineage fixture.
//!
//! The workflow is an approximation built for testing, not a reproduction of
//! any published pipeline:
//!
//! ```text
//! WELL -> ingest-logs -> os_path ┐
//!                          ZONE ─┴> feature-extraction-per-zone -> DATASET
//! DATASET + WELL -> dataset-integration -> DATASET -> model-training -> PROJECTTRAINING
//! ```
//!
//! The first well, log file and zone are always `12153`, `file_158.las` and
//! `278`; the remaining identifiers come from a seeded generator so the same
//! arguments always produce byte-identical output.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use provsvc_core::{
    AttributeSpec, DataItemValue, DataTypeSpec, Dataflow, IngestEnvelope, TransformationSpec,
    ValueKind, WorkflowSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORKFLOW: &str = "sss";
pub const INGEST_LOGS: &str = "ingest-logs";
pub const FEATURE_EXTRACTION: &str = "feature-extraction-per-zone";
pub const DATASET_INTEGRATION: &str = "dataset-integration";
pub const MODEL_TRAINING: &str = "model-training";

pub const FIRST_WELL: &str = "12153";
pub const FIRST_LOG: &str = "file_158.las";
pub const FIRST_ZONE: &str = "278";

pub const SPEC_FILE: &str = "spec.json";
pub const ENVELOPES_FILE: &str = "envelopes.jsonl";

pub const DEFAULT_SEED: u64 = 158;

/// The three reference queries over the fixture, in Q1, Q2, Q3 order.
pub const REFERENCE_QUERIES: [&str; 3] = [
    "/provenance/seeds/WELL/values/12153/direction/forward/targets/PROJECTTRAINING",
    "/provenance/seeds/os_path/values/file_158.las/direction/forward/targets/PROJECTTRAINING",
    "/provenance/seeds/ZONE/values/278/direction/forward/targets/PROJECTTRAINING",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureParams {
    pub wells: usize,
    pub zones: usize,
    /// Trained models per well.
    pub models: usize,
    pub seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            wells: 1,
            zones: 1,
            models: 1,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub spec: WorkflowSpec,
    pub envelopes: Vec<IngestEnvelope>,
}

fn ty(label: &str, id_attr: &str, extra: &[(&str, ValueKind)]) -> DataTypeSpec {
    let mut attrs = vec![AttributeSpec::identifying(id_attr, ValueKind::Text)];
    attrs.extend(extra.iter().map(|(n, k)| AttributeSpec::new(*n, *k)));
    DataTypeSpec::new(label, attrs)
}

fn well() -> DataTypeSpec {
    ty("WELL", "well_id", &[])
}
fn os_path() -> DataTypeSpec {
    ty("os_path", "path", &[])
}
fn zone() -> DataTypeSpec {
    ty("ZONE", "zone_id", &[])
}
fn dataset() -> DataTypeSpec {
    ty("DATASET", "dataset_id", &[("rows", ValueKind::Number)])
}
fn model() -> DataTypeSpec {
    ty("PROJECTTRAINING", "model_id", &[("mse", ValueKind::Number)])
}

pub fn fixture_spec() -> WorkflowSpec {
    let t = |name: &str, inputs, outputs| TransformationSpec {
        name: name.into(),
        inputs,
        outputs,
    };
    WorkflowSpec {
        name: WORKFLOW.into(),
        version: 0,
        transformations: vec![
            t(INGEST_LOGS, vec![well()], vec![os_path()]),
            t(FEATURE_EXTRACTION, vec![os_path(), zone()], vec![dataset()]),
            t(DATASET_INTEGRATION, vec![dataset(), well()], vec![dataset()]),
            t(MODEL_TRAINING, vec![dataset()], vec![model()]),
        ],
        dataflow: vec![
            Dataflow::new(INGEST_LOGS, "os_path", FEATURE_EXTRACTION),
            Dataflow::new(FEATURE_EXTRACTION, "DATASET", DATASET_INTEGRATION),
            Dataflow::new(DATASET_INTEGRATION, "DATASET", MODEL_TRAINING),
        ],
    }
}

/// Draws `n` distinct identifiers, `first` included as the first one.
fn identifiers(
    rng: &mut ChaCha8Rng,
    n: usize,
    first: &str,
    make: impl Fn(u32) -> String,
    range: std::ops::Range<u32>,
) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    seen.insert(first.to_string());
    out.push(first.to_string());
    while out.len() < n {
        let id = make(rng.random_range(range.clone()));
        if seen.insert(id.clone()) {
            out.push(id);
        }
    }
    out
}

struct Tasks {
    exec_id: String,
    clock: DateTime<Utc>,
    next: usize,
    out: Vec<IngestEnvelope>,
}

impl Tasks {
    fn push(&mut self, transformation: &str, used: Vec<DataItemValue>, generated: Vec<DataItemValue>) {
        let started = self.clock;
        let ended = started + Duration::seconds(30);
        self.clock = ended + Duration::seconds(1);
        self.next += 1;
        let env = IngestEnvelope::new(
            self.exec_id.clone(),
            WORKFLOW,
            format!("task-{:05}", self.next),
            transformation,
            started,
            ended,
            used,
            generated,
        )
        .expect("ended_at follows started_at");
        self.out.push(env);
    }
}

fn item(label: &str, id_attr: &str, id: &str) -> DataItemValue {
    DataItemValue::new(label, id).with_attr(id_attr, id)
}

pub fn generate(params: FixtureParams) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let wells = identifiers(&mut rng, params.wells, FIRST_WELL, |n| n.to_string(), 10_000..99_999);
    let logs = identifiers(
        &mut rng,
        params.wells,
        FIRST_LOG,
        |n| format!("file_{n}.las"),
        100..1_000,
    );
    let zones = identifiers(&mut rng, params.zones, FIRST_ZONE, |n| n.to_string(), 100..1_000);

    let mut tasks = Tasks {
        exec_id: format!("sss-exec-{}", params.seed),
        clock: Utc.with_ymd_and_hms(2019, 6, 1, 8, 0, 0).unwrap(),
        next: 0,
        out: Vec::new(),
    };

    for (w, log) in wells.iter().zip(&logs) {
        tasks.push(
            INGEST_LOGS,
            vec![item("WELL", "well_id", w)],
            vec![item("os_path", "path", log)],
        );
    }
    for (w, log) in wells.iter().zip(&logs) {
        let mut zone_sets = Vec::new();
        for z in &zones {
            let ds = format!("features-{w}-{z}");
            let rows = rng.random_range(500..5_000) as f64;
            tasks.push(
                FEATURE_EXTRACTION,
                vec![item("os_path", "path", log), item("ZONE", "zone_id", z)],
                vec![item("DATASET", "dataset_id", &ds).with_attr("rows", rows)],
            );
            zone_sets.push(ds);
        }
        let mut used: Vec<DataItemValue> = zone_sets
            .iter()
            .map(|ds| item("DATASET", "dataset_id", ds))
            .collect();
        used.push(item("WELL", "well_id", w));
        let integrated = format!("integrated-{w}");
        tasks.push(
            DATASET_INTEGRATION,
            used,
            vec![item("DATASET", "dataset_id", &integrated)],
        );
        for k in 0..params.models {
            let mse = (rng.random_range(0.05..1.0_f64) * 10_000.0).round() / 10_000.0;
            tasks.push(
                MODEL_TRAINING,
                vec![item("DATASET", "dataset_id", &integrated)],
                vec![item("PROJECTTRAINING", "model_id", &format!("model-{w}-{k}"))
                    .with_attr("mse", mse)],
            );
        }
    }

    Fixture {
        spec: fixture_spec(),
        envelopes: tasks.out,
    }
}

impl Fixture {
    pub fn spec_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.spec).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn envelopes_jsonl(&self) -> String {
        let mut out = String::new();
        for env in &self.envelopes {
            out.push_str(&serde_json::to_string(env).expect("envelope serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes `spec.json` and `envelopes.jsonl` into `dir`, creating it.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let spec_path = dir.join(SPEC_FILE);
        let env_path = dir.join(ENVELOPES_FILE);
        fs::File::create(&spec_path)?.write_all(self.spec_json().as_bytes())?;
        fs::File::create(&env_path)?.write_all(self.envelopes_jsonl().as_bytes())?;
        Ok((spec_path, env_path))
    }
}
