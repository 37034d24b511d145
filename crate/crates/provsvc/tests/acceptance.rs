//! Acceptance suite. Runs each criterion in sequence (timing-sensitive ones
//! must not share the CPU with each other) and prints one PASS/FAIL line per
//! criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use common::{EnvelopeOracle, TestServer};
use provsvc::client::ServiceClient;
use provsvc::fixture::{self, FixtureParams, REFERENCE_QUERIES};
use provsvc::ingest::JobStatus;
use provsvc::loader::{load_historical, HistoricalLoadPlan};
use provsvc::service::QueryOptions;
use provsvc::store::GraphStore;
use provsvc_core::{
    parse_query_path, traverse, Attributes, Direction, EdgeKind, GraphDelta, NodeId, NodeKind,
    ProvEdge, ProvNode, QueryError, QueryRequest, QueryResult, Snapshot,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("reference queries end to end", reference_queries),
        ("path grammar goldens", path_grammar),
        ("traversal oracle equivalence", oracle_equivalence),
        ("direction duality", direction_duality),
        ("snapshot isolation stress", snapshot_stress),
        ("query latency under load", latency_under_load),
        ("batch loader cadence", loader_cadence),
        ("idempotent replay", idempotent_replay),
        ("asynchronous failure tracking", async_failure),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed",
        criteria.len() - failed,
        failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- fixtures

fn write_envelopes(dir: &std::path::Path, fx: &fixture::Fixture) -> std::path::PathBuf {
    fx.write_to(dir).expect("write fixture").1
}

fn load_file(client: &ServiceClient, path: &std::path::Path, batch: usize, interval: Duration) {
    let plan = HistoricalLoadPlan {
        source: path.to_path_buf(),
        batch_size: batch,
        interval,
    };
    let report = load_historical(&plan, client).expect("load");
    assert_eq!(report.failed, 0, "load failures: {:?}", report.failures);
}

fn raw_query(url: &str, path: &str) -> Result<QueryResult, String> {
    let resp = reqwest::blocking::get(format!("{url}{path}")).map_err(|e| e.to_string())?;
    if resp.status() != 200 {
        return Err(format!("{path}: HTTP {}", resp.status()));
    }
    resp.json().map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- criteria

fn reference_queries() -> Outcome {
    let started = Instant::now();
    let server = TestServer::start();
    let client = ServiceClient::new(&server.url).unwrap();
    let fx = fixture::generate(FixtureParams {
        wells: 8,
        zones: 4,
        models: 3,
        seed: fixture::DEFAULT_SEED,
    });
    let dir = tempfile::tempdir().unwrap();
    let envs = write_envelopes(dir.path(), &fx);
    client.register_spec(&fx.spec).map_err(|e| e.to_string())?;
    load_file(&client, &envs, 25, Duration::ZERO);

    let oracle = EnvelopeOracle::new(&fx.envelopes);
    let seeds = [
        ("WELL", fixture::FIRST_WELL),
        ("os_path", fixture::FIRST_LOG),
        ("ZONE", fixture::FIRST_ZONE),
    ];
    let mut sizes = Vec::new();
    for (path, (seed_type, seed)) in REFERENCE_QUERIES.iter().zip(seeds) {
        let result = raw_query(&server.url, path)?;
        let got: BTreeSet<String> = result
            .targets
            .iter()
            .filter(|t| t.type_label == "PROJECTTRAINING")
            .map(|t| t.identity.clone())
            .collect();
        ensure!(got.len() == result.targets.len(), "{path}: non-model targets");
        let want = oracle.targets(seed_type, &[seed], Direction::Forward, "PROJECTTRAINING");
        ensure!(!got.is_empty(), "{path}: empty target set");
        ensure!(got == want, "{path}: got {got:?}, oracle {want:?}");
        sizes.push(got.len());
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "target counts {sizes:?} equal oracle, {:.2}s total",
        elapsed.as_secs_f64()
    ))
}

fn path_grammar() -> Outcome {
    let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let goldens = [
        (
            REFERENCE_QUERIES[0],
            QueryRequest::new("WELL", s(&["12153"]), Direction::Forward, s(&["PROJECTTRAINING"])),
        ),
        (
            REFERENCE_QUERIES[1],
            QueryRequest::new(
                "os_path",
                s(&["file_158.las"]),
                Direction::Forward,
                s(&["PROJECTTRAINING"]),
            ),
        ),
        (
            REFERENCE_QUERIES[2],
            QueryRequest::new("ZONE", s(&["278"]), Direction::Forward, s(&["PROJECTTRAINING"])),
        ),
    ];
    for (path, want) in &goldens {
        let got = parse_query_path(path).map_err(|e| format!("{path}: {e}"))?;
        ensure!(&got == want, "{path}: parsed {got:?}");
    }

    #[derive(Debug, PartialEq)]
    enum Want {
        Malformed,
        Direction,
    }
    let malformed = [
        ("", Want::Malformed),
        ("provenance/seeds/ZONE/values/278/direction/forward/targets/X", Want::Malformed),
        ("/provenance/seeds/ZONE/values/278/direction/forward", Want::Malformed),
        (
            "/provenance/seeds/ZONE/values/278/direction/forward/targets/X/extra",
            Want::Malformed,
        ),
        ("/provenance/seeds/ZONE/values/278/direction/forward/targets/X/", Want::Malformed),
        ("/provenance/values/278/seeds/ZONE/direction/forward/targets/X", Want::Malformed),
        ("/provenance/seed/ZONE/values/278/direction/forward/targets/X", Want::Malformed),
        ("/provenance/seeds//values/278/direction/forward/targets/X", Want::Malformed),
        ("/provenance/seeds/ZONE/values/278,/direction/forward/targets/X", Want::Malformed),
        ("/provenance/seeds/ZONE/values/278/direction/sideways/targets/X", Want::Direction),
    ];
    for (path, want) in &malformed {
        let got = match parse_query_path(path) {
            Ok(r) => return Err(format!("`{path}` parsed to {r:?}")),
            Err(QueryError::MalformedPath(_)) => Want::Malformed,
            Err(QueryError::InvalidDirection(_)) => Want::Direction,
        };
        ensure!(&got == want, "`{path}`: {got:?}, expected {want:?}");
    }
    Ok(format!(
        "{} goldens exact, {} malformed variants rejected as specified",
        goldens.len(),
        malformed.len()
    ))
}

/// Random graph plus the edge list the oracle works from.
struct RandomGraph {
    snapshot: Snapshot,
    nodes: Vec<ProvNode>,
    edges: Vec<(usize, usize)>,
}

const ENTITY_TYPES: [&str; 4] = ["A", "B", "C", "D"];
const ACTIVITY_TYPES: [&str; 3] = ["t1", "t2", "t3"];

fn random_graph(rng: &mut ChaCha8Rng) -> RandomGraph {
    let n = rng.random_range(2..=200usize);
    let nodes: Vec<ProvNode> = (0..n)
        .map(|i| {
            let id = format!("n{i}");
            if rng.random_bool(0.6) {
                ProvNode::entity(ENTITY_TYPES.choose(rng).unwrap(), &id, Attributes::new())
            } else {
                ProvNode::activity("x", &id, ACTIVITY_TYPES.choose(rng).unwrap(), Attributes::new())
            }
        })
        .collect();
    let m = rng.random_range(0..=3 * n);
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    let mut delta = GraphDelta {
        nodes: nodes.clone(),
        edges: Vec::new(),
    };
    for _ in 0..m {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let kind = match (nodes[a].kind, nodes[b].kind) {
            (NodeKind::Entity, NodeKind::Activity) => EdgeKind::Used,
            (NodeKind::Activity, NodeKind::Entity) => EdgeKind::Generated,
            (NodeKind::Entity, NodeKind::Entity) if a != b => EdgeKind::Derived,
            _ => continue,
        };
        if seen.insert((a, b)) {
            edges.push((a, b));
            delta
                .edges
                .push(ProvEdge::new(kind, nodes[a].node_id, nodes[b].node_id));
        }
    }
    let snapshot = Snapshot::empty().apply(&delta).expect("valid random delta");
    RandomGraph {
        snapshot,
        nodes,
        edges,
    }
}

/// Hop distances from `seeds` by Bellman-Ford relaxation over the edge list.
fn oracle_distances(g: &RandomGraph, seeds: &[usize], direction: Direction) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.nodes.len()];
    for &s in seeds {
        dist[s] = Some(0);
    }
    for _ in 0..g.nodes.len() {
        let mut changed = false;
        for &(a, b) in &g.edges {
            let (u, v) = match direction {
                Direction::Forward => (a, b),
                Direction::Backward => (b, a),
            };
            if let Some(du) = dist[u] {
                if dist[v].is_none_or(|dv| du + 1 < dv) {
                    dist[v] = Some(du + 1);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

fn matches_target(node: &ProvNode, targets: &[String]) -> bool {
    targets.iter().any(|t| match t.as_str() {
        "Entity" => node.kind == NodeKind::Entity,
        "Activity" => node.kind == NodeKind::Activity,
        other => node.type_label == other,
    })
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let graphs = 500;
    let mut queries = 0;
    let mut checked_paths = 0;
    let all_types: Vec<&str> = ENTITY_TYPES
        .iter()
        .chain(ACTIVITY_TYPES.iter())
        .chain(["Entity", "Activity"].iter())
        .copied()
        .collect();
    for gi in 0..graphs {
        let g = random_graph(&mut rng);
        let index: BTreeMap<NodeId, usize> = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node_id, i))
            .collect();
        for _ in 0..4 {
            queries += 1;
            let k = rng.random_range(1..=3);
            let seeds: Vec<usize> = (0..k).map(|_| rng.random_range(0..g.nodes.len())).collect();
            let seed_type = g.nodes[seeds[0]].type_label.clone();
            // seeds of other types never resolve under this seed type
            let seeds: Vec<usize> = seeds
                .into_iter()
                .filter(|&s| g.nodes[s].type_label == seed_type)
                .collect();
            let direction = if rng.random_bool(0.5) {
                Direction::Forward
            } else {
                Direction::Backward
            };
            let t = rng.random_range(1..=2);
            let targets: Vec<String> = all_types
                .choose_multiple(&mut rng, t)
                .map(|s| s.to_string())
                .collect();
            let req = QueryRequest::new(
                seed_type.clone(),
                seeds.iter().map(|&s| g.nodes[s].identity.clone()).collect(),
                direction,
                targets.clone(),
            );
            let result = traverse(&g.snapshot, &req);
            let dist = oracle_distances(&g, &seeds, direction);

            let want: BTreeSet<NodeId> = g
                .nodes
                .iter()
                .enumerate()
                .filter(|(i, n)| dist[*i].is_some() && matches_target(n, &targets))
                .map(|(_, n)| n.node_id)
                .collect();
            let got: BTreeSet<NodeId> = result.targets.iter().map(|t| t.node_id).collect();
            ensure!(
                got == want && got.len() == result.targets.len(),
                "graph {gi}: {req:?}: target sets differ ({} vs oracle {})",
                got.len(),
                want.len()
            );
            ensure!(result.paths.len() == result.targets.len(), "graph {gi}: path count");
            let edge_set: HashSet<(usize, usize)> = g.edges.iter().copied().collect();
            let mut last_key = None;
            for (t, path) in result.targets.iter().zip(&result.paths) {
                let ti = index[&t.node_id];
                ensure!(!path.is_empty(), "graph {gi}: empty path");
                ensure!(
                    seeds.contains(&index[&path[0]]),
                    "graph {gi}: path does not start at a seed"
                );
                ensure!(*path.last().unwrap() == t.node_id, "graph {gi}: path end");
                for w in path.windows(2) {
                    let (u, v) = (index[&w[0]], index[&w[1]]);
                    let e = match direction {
                        Direction::Forward => (u, v),
                        Direction::Backward => (v, u),
                    };
                    ensure!(edge_set.contains(&e), "graph {gi}: path uses a non-edge");
                }
                ensure!(
                    Some(path.len() - 1) == dist[ti],
                    "graph {gi}: path length {} but distance {:?}",
                    path.len() - 1,
                    dist[ti]
                );
                let key = (path.len(), t.node_id);
                ensure!(last_key.is_none_or(|k| k <= key), "graph {gi}: default order");
                last_key = Some(key);
                checked_paths += 1;
            }
        }
    }
    Ok(format!(
        "{graphs} graphs, {queries} queries, {checked_paths} witness paths minimal, 0 mismatches"
    ))
}

fn direction_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut pairs = 0;
    let mut reachable = 0;
    for gi in 0..500 {
        let g = random_graph(&mut rng);
        let n = g.nodes.len();
        for _ in 0..20 {
            let (a, b) = (&g.nodes[rng.random_range(0..n)], &g.nodes[rng.random_range(0..n)]);
            let fwd = traverse(
                &g.snapshot,
                &QueryRequest::new(
                    a.type_label.clone(),
                    vec![a.identity.clone()],
                    Direction::Forward,
                    vec![b.type_label.clone()],
                ),
            );
            let bwd = traverse(
                &g.snapshot,
                &QueryRequest::new(
                    b.type_label.clone(),
                    vec![b.identity.clone()],
                    Direction::Backward,
                    vec![a.type_label.clone()],
                ),
            );
            let b_from_a = fwd.targets.iter().any(|t| t.node_id == b.node_id);
            let a_from_b = bwd.targets.iter().any(|t| t.node_id == a.node_id);
            ensure!(
                b_from_a == a_from_b,
                "graph {gi}: {} -> {} forward={b_from_a} backward={a_from_b}",
                a.summary_label(),
                b.summary_label()
            );
            pairs += 1;
            reachable += b_from_a as usize;
        }
    }
    Ok(format!("{pairs} node pairs, {reachable} reachable, symmetric"))
}

fn snapshot_stress() -> Outcome {
    const BATCHES: usize = 100;
    const NODES: usize = 60;
    const EDGES: usize = 40;
    const READERS: usize = 8;
    const MIN_OBSERVATIONS: usize = 10_000;

    let store = Arc::new(GraphStore::new());
    let done = Arc::new(AtomicBool::new(false));
    let total = Arc::new(AtomicUsize::new(0));
    let observed: Arc<Mutex<Vec<(usize, usize)>>> = Arc::default();

    let readers: Vec<_> = (0..READERS)
        .map(|_| {
            let (store, done, total, observed) =
                (store.clone(), done.clone(), total.clone(), observed.clone());
            std::thread::spawn(move || {
                let mut local = Vec::new();
                while !(done.load(Ordering::Acquire)
                    && total.load(Ordering::Relaxed) >= MIN_OBSERVATIONS)
                {
                    let s = store.stats();
                    local.push((s.node_count, s.edge_count));
                    total.fetch_add(1, Ordering::Relaxed);
                    if local.len() % 64 == 0 {
                        std::thread::yield_now();
                    }
                }
                observed.lock().unwrap().extend(local);
            })
        })
        .collect();

    for b in 0..BATCHES {
        let nodes: Vec<ProvNode> = (0..NODES)
            .map(|i| ProvNode::entity("S", &format!("{b}-{i}"), Attributes::new()))
            .collect();
        let edges = (0..EDGES)
            .map(|i| ProvEdge::new(EdgeKind::Derived, nodes[i].node_id, nodes[i + 1].node_id))
            .collect();
        store
            .apply_batch(&GraphDelta { nodes, edges })
            .map_err(|e| e.to_string())?;
        std::thread::sleep(Duration::from_micros(500));
    }
    done.store(true, Ordering::Release);
    for r in readers {
        r.join().map_err(|_| "reader panicked".to_string())?;
    }

    let observed = observed.lock().unwrap();
    let boundaries: HashSet<(usize, usize)> =
        (0..=BATCHES).map(|k| (k * NODES, k * EDGES)).collect();
    let bad: Vec<_> = observed.iter().filter(|o| !boundaries.contains(o)).collect();
    let distinct: BTreeSet<_> = observed.iter().collect();
    ensure!(observed.len() >= MIN_OBSERVATIONS, "only {} observations", observed.len());
    ensure!(bad.is_empty(), "{} intermediate observations, e.g. {:?}", bad.len(), bad[0]);
    ensure!(
        distinct.len() > 2,
        "readers only saw {} distinct states; no overlap with the writer",
        distinct.len()
    );
    Ok(format!(
        "{} observations, {} distinct batch boundaries, 0 intermediate",
        observed.len(),
        distinct.len()
    ))
}

/// 2,000 groups of 5 nodes (source entity, activity, three outputs), with
/// groups chained by Derived links inside blocks of 10 groups.
fn big_graph() -> GraphDelta {
    let mut delta = GraphDelta::default();
    let mut prev_out: Option<NodeId> = None;
    for g in 0..2_000 {
        let src = ProvNode::entity("SRC", &g.to_string(), Attributes::new());
        let act = ProvNode::activity("bulk", &format!("step-{g}"), "step", Attributes::new());
        delta.edges.push(ProvEdge::new(EdgeKind::Used, src.node_id, act.node_id));
        if let Some(p) = prev_out.take() {
            delta.edges.push(ProvEdge::new(EdgeKind::Derived, p, src.node_id));
        }
        for k in 0..3 {
            let mut attrs = Attributes::new();
            attrs.insert("score".into(), (((g * 3 + k) % 97) as f64).into());
            let out = ProvNode::entity("OUT", &format!("{g}-{k}"), attrs);
            delta.edges.push(ProvEdge::new(EdgeKind::Generated, act.node_id, out.node_id));
            if k == 0 && g % 10 != 9 {
                prev_out = Some(out.node_id);
            }
            delta.nodes.push(out);
        }
        delta.nodes.push(src);
        delta.nodes.push(act);
    }
    delta
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

fn latency_under_load() -> Outcome {
    const IDLE_SAMPLES: usize = 101;
    const MIN_LOAD_SAMPLES: usize = 31;

    let server = TestServer::start();
    let delta = big_graph();
    ensure!(delta.nodes.len() == 10_000, "graph has {} nodes", delta.nodes.len());
    server
        .engine
        .store
        .apply_batch(&delta)
        .map_err(|e| e.to_string())?;
    let client = ServiceClient::new(&server.url).unwrap();
    // one seed at the head of each of ten blocks
    let seeds: Vec<String> = (0..10).map(|b| (b * 100).to_string()).collect();
    let path = format!(
        "/provenance/seeds/SRC/values/{}/direction/forward/targets/OUT?order_by=score",
        seeds.join(",")
    );
    let timed = || -> Result<(Duration, usize), String> {
        let t = Instant::now();
        let r = raw_query(&server.url, &path)?;
        Ok((t.elapsed(), r.targets.len()))
    };
    let (_, expected_targets) = timed()?;
    ensure!(expected_targets == 10 * 30, "{expected_targets} targets");

    let mut idle = Vec::new();
    for _ in 0..IDLE_SAMPLES {
        idle.push(timed()?.0);
    }

    let fx = fixture::generate(FixtureParams {
        wells: 150,
        zones: 4,
        models: 2,
        seed: 1,
    });
    let dir = tempfile::tempdir().unwrap();
    let envs = write_envelopes(dir.path(), &fx);
    client.register_spec(&fx.spec).map_err(|e| e.to_string())?;
    let loading = Arc::new(AtomicBool::new(true));
    let loader = {
        let (url, loading) = (server.url.clone(), loading.clone());
        std::thread::spawn(move || {
            let client = ServiceClient::new(&url).unwrap();
            load_file(&client, &envs, 25, Duration::from_millis(20));
            loading.store(false, Ordering::Release);
        })
    };
    let mut busy = Vec::new();
    while loading.load(Ordering::Acquire) {
        let (d, n) = timed()?;
        ensure!(n == expected_targets, "answer changed under load: {n}");
        busy.push(d);
    }
    loader.join().map_err(|_| "loader panicked".to_string())?;
    ensure!(
        busy.len() >= MIN_LOAD_SAMPLES,
        "load finished after only {} samples",
        busy.len()
    );
    let epoch_after = client.health().map_err(|e| e.to_string())?.epoch;

    let (idle_med, busy_med) = (median(idle), median(busy.clone()));
    let ratio = busy_med.as_secs_f64() / idle_med.as_secs_f64();
    ensure!(
        ratio <= 5.0,
        "median {:.2}ms under load vs {:.2}ms idle (x{ratio:.2})",
        busy_med.as_secs_f64() * 1e3,
        idle_med.as_secs_f64() * 1e3
    );
    Ok(format!(
        "idle median {:.2}ms, under load {:.2}ms over {} samples (x{ratio:.2}), load reached epoch {epoch_after}",
        idle_med.as_secs_f64() * 1e3,
        busy_med.as_secs_f64() * 1e3,
        busy.len()
    ))
}

fn loader_cadence() -> Outcome {
    let server = TestServer::start();
    let client = ServiceClient::new(&server.url).unwrap();
    let fx = fixture::generate(FixtureParams {
        wells: 2,
        zones: 2,
        models: 2,
        seed: 2,
    });
    client.register_spec(&fx.spec).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ten.jsonl");
    std::fs::write(&file, fx.envelopes_jsonl().lines().take(10).collect::<Vec<_>>().join("\n"))
        .unwrap();
    let plan = HistoricalLoadPlan {
        source: file,
        batch_size: 3,
        interval: Duration::from_millis(200),
    };
    let report = load_historical(&plan, &client).map_err(|e| e.to_string())?;
    ensure!(report.total == 10 && report.persisted == 10, "{report:?}");
    let offsets: Vec<f64> = report.submissions.iter().map(|s| s.offset_ms).collect();
    let sizes: Vec<usize> = report.submissions.iter().map(|s| s.records).collect();
    ensure!(sizes == [3, 3, 3, 1], "submission sizes {sizes:?}");
    let span = offsets.last().unwrap() - offsets[0];
    let gaps: Vec<f64> = offsets.windows(2).map(|w| w[1] - w[0]).collect();
    ensure!(span >= 600.0, "span {span:.1}ms");
    ensure!(gaps.iter().all(|&g| g >= 180.0), "gaps {gaps:?}");
    Ok(format!(
        "4 submissions {sizes:?}, span {span:.0}ms, min gap {:.0}ms",
        gaps.iter().copied().fold(f64::INFINITY, f64::min)
    ))
}

fn idempotent_replay() -> Outcome {
    let server = TestServer::start();
    let client = ServiceClient::new(&server.url).unwrap();
    let fx = fixture::generate(FixtureParams {
        wells: 5,
        zones: 3,
        models: 2,
        seed: 8,
    });
    client.register_spec(&fx.spec).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let envs = write_envelopes(dir.path(), &fx);

    let observe = || -> Result<(usize, usize, u64, Vec<QueryResult>), String> {
        let h = client.health().map_err(|e| e.to_string())?;
        let answers = REFERENCE_QUERIES
            .iter()
            .map(|p| client.query_path(p, &QueryOptions::default()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok((h.node_count, h.edge_count, h.epoch, answers))
    };
    load_file(&client, &envs, 10, Duration::ZERO);
    let once = observe()?;
    load_file(&client, &envs, 10, Duration::ZERO);
    let twice = observe()?;
    ensure!(
        (once.0, once.1, once.2) == (twice.0, twice.1, twice.2),
        "stats {:?} then {:?}",
        (once.0, once.1, once.2),
        (twice.0, twice.1, twice.2)
    );
    ensure!(once.3 == twice.3, "query answers changed on replay");
    Ok(format!(
        "{} nodes, {} edges, epoch {} unchanged by replay; Q1-Q3 identical",
        once.0, once.1, once.2
    ))
}

fn async_failure() -> Outcome {
    let server = TestServer::start();
    let client = ServiceClient::new(&server.url).unwrap();
    let fx = fixture::generate(FixtureParams::default());
    client.register_spec(&fx.spec).map_err(|e| e.to_string())?;
    for env in &fx.envelopes[..2] {
        client.submit(env).map_err(|e| e.to_string())?;
    }
    server.wait_idle();
    let before = client.health().map_err(|e| e.to_string())?;

    let mut env = fx.envelopes[2].clone();
    env.transformation = "seismic-inversion".into();
    let resp = reqwest::blocking::Client::new()
        .post(format!("{}/provenance", server.url))
        .json(&env)
        .send()
        .map_err(|e| e.to_string())?;
    ensure!(resp.status() == 202, "HTTP {}", resp.status());
    let body: Value = resp.json().map_err(|e| e.to_string())?;
    let job_id = body["job_id"].as_str().ok_or("no job_id")?.to_string();
    let job = client
        .wait_job(&job_id, Duration::from_secs(10))
        .map_err(|e| e.to_string())?;
    ensure!(job.status == JobStatus::Failed, "status {:?}", job.status);
    let reason = job.failure_reason.unwrap_or_default();
    ensure!(reason.contains("unknown-transformation"), "reason `{reason}`");
    let after = client.health().map_err(|e| e.to_string())?;
    ensure!(
        (before.node_count, before.edge_count, before.epoch)
            == (after.node_count, after.edge_count, after.epoch),
        "graph changed: {before:?} -> {after:?}"
    );
    Ok(format!("202 then failed ({reason}); graph untouched at epoch {}", after.epoch))
}
