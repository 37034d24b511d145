//! Operator command line.
//!
//! Exit codes: 0 success, 1 domain failure (validation, failed records),
//! 2 usage or IO error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use provsvc_core::{
    Direction, OrderBy, QueryRequest, QueryResult, Scalar, SortOrder, ValidationReport,
    WorkflowSpec,
};

use crate::client::{ClientError, ServiceClient};
use crate::config::ServiceConfig;
use crate::fixture::{self, FixtureParams};
use crate::loader::{load_historical, HistoricalLoadPlan, LoadError, LoadReport};
use crate::service::{self, QueryOptions};

pub const DEFAULT_URL: &str = "http://127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "provsvc", version, about = "Provenance lineage service and client")]
pub struct Cli {
    /// Base URL of a running service.
    #[arg(long, global = true, env = "PROVSVC_URL", default_value = DEFAULT_URL)]
    pub url: String,

    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the service until interrupted.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Register a workflow spec from a JSON file.
    RegisterSpec { file: PathBuf },
    /// Load a newline-delimited envelope file in timed batches.
    Load {
        file: PathBuf,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
        /// Pause between batches, e.g. `200ms` or `1s`.
        #[arg(long, default_value = "0s", value_parser = humantime::parse_duration)]
        interval: Duration,
    },
    /// Lineage query from seed entities to target types.
    Query(QueryArgs),
    /// Write a synthetic workflow spec and envelope file.
    GenFixture {
        #[arg(long)]
        wells: usize,
        #[arg(long)]
        zones: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        models: usize,
        #[arg(long, default_value_t = fixture::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub seed_type: String,
    /// Seed identity; repeat or comma-separate for several.
    #[arg(long = "value", required = true, value_delimiter = ',')]
    pub values: Vec<String>,
    #[arg(long)]
    pub direction: Direction,
    /// Target type label; repeat or comma-separate for several.
    #[arg(long = "target", required = true, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Print only the target with the smallest numeric value of this attribute.
    #[arg(long, conflicts_with = "order_by")]
    pub min_attr: Option<String>,
    /// Sort targets by a numeric attribute.
    #[arg(long)]
    pub order_by: Option<String>,
    #[arg(long, requires = "order_by", value_parser = ["asc", "desc"])]
    pub order: Option<String>,
    #[arg(long)]
    pub max_depth: Option<u32>,
    /// Also write witness paths as a Graphviz digraph.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

enum Failure {
    Domain(String),
    Usage(String),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

pub fn run(cli: Cli) -> ExitCode {
    let json = cli.json;
    let outcome = match cli.command {
        Command::Serve { config } => serve(config.as_deref()),
        Command::RegisterSpec { file } => register_spec(&cli.url, &file, json),
        Command::Load {
            file,
            batch_size,
            interval,
        } => load(&cli.url, file, batch_size, interval, json),
        Command::Query(args) => query(&cli.url, &args, json),
        Command::GenFixture {
            wells,
            zones,
            out,
            models,
            seed,
        } => gen_fixture(
            FixtureParams {
                wells,
                zones,
                models,
                seed,
            },
            &out,
            json,
        ),
    };
    match outcome {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Domain(out)) => {
            print!("{out}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn serve(config: Option<&Path>) -> Outcome {
    let config = ServiceConfig::load(config).map_err(|e| Failure::Usage(e.to_string()))?;
    tracing::info!("{}", service::describe(&config));
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Usage(e.to_string()))?;
    rt.block_on(service::serve(config, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
    .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(String::new())
}

fn register_spec(url: &str, file: &Path, json: bool) -> Outcome {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", file.display())))?;
    let spec: WorkflowSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{} is not a workflow spec: {e}", file.display())))?;
    let client = ServiceClient::new(url)?;
    match client.register_spec(&spec) {
        Ok(reg) if json => Ok(to_json(&reg)),
        Ok(reg) => Ok(format!("registered version {} of {}\n", reg.version, reg.name)),
        Err(ClientError::Status { status: 400, body }) => {
            match serde_json::from_str::<ValidationReport>(&body) {
                Ok(report) if json => Err(Failure::Domain(to_json(&report))),
                Ok(report) => {
                    let mut out = String::from("spec rejected:\n");
                    for v in &report.violations {
                        let _ = writeln!(out, "  {}: {}", v.code.as_str(), v.message);
                    }
                    Err(Failure::Domain(out))
                }
                Err(_) => Err(Failure::Domain(format!("spec rejected: {body}\n"))),
            }
        }
        Err(e) => Err(e.into()),
    }
}

fn load(url: &str, file: PathBuf, batch_size: usize, interval: Duration, json: bool) -> Outcome {
    let client = ServiceClient::new(url)?;
    let plan = HistoricalLoadPlan {
        source: file,
        batch_size,
        interval,
    };
    let report = load_historical(&plan, &client).map_err(|e| match e {
        LoadError::InvalidBatchSize => Failure::Usage(e.to_string()),
        LoadError::SourceUnreadable { .. } => Failure::Usage(e.to_string()),
    })?;
    let out = if json {
        to_json(&report)
    } else {
        render_report(&report)
    };
    if report.failed == 0 {
        Ok(out)
    } else {
        Err(Failure::Domain(out))
    }
}

pub fn render_report(r: &LoadReport) -> String {
    let mut out = format!(
        "total={} persisted={} failed={}\nbatches={}\n",
        r.total,
        r.persisted,
        r.failed,
        r.submissions.len()
    );
    for f in &r.failures {
        let _ = writeln!(out, "line {}: {}", f.line, f.reason);
    }
    out
}

impl QueryArgs {
    pub fn request(&self) -> QueryRequest {
        let mut req = QueryRequest::new(
            self.seed_type.clone(),
            self.values.clone(),
            self.direction,
            self.targets.clone(),
        );
        req.max_depth = self.max_depth;
        req.order_by_attribute = self.order_by.as_ref().map(|attr| OrderBy {
            attribute: attr.clone(),
            order: match self.order.as_deref() {
                Some("desc") => SortOrder::Desc,
                _ => SortOrder::Asc,
            },
        });
        req
    }
}

/// Keeps only the target with the smallest numeric `attr` (ties go to the
/// earlier target). Targets without a numeric value are dropped.
pub fn select_min(result: &QueryResult, attr: &str) -> QueryResult {
    let best = result
        .targets
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.attributes.get(attr).and_then(Scalar::as_f64).map(|v| (i, v)))
        .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
            Some((_, b)) if b <= v => acc,
            _ => Some((i, v)),
        });
    let mut out = result.clone();
    match best {
        Some((i, _)) => {
            out.targets = vec![result.targets[i].clone()];
            out.paths = result.paths.get(i).cloned().into_iter().collect();
        }
        None => {
            out.targets.clear();
            out.paths.clear();
        }
    }
    out
}

fn query(url: &str, args: &QueryArgs, json: bool) -> Outcome {
    let client = ServiceClient::new(url)?;
    let req = args.request();
    let mut result = match client.query(&req, &QueryOptions::default()) {
        Ok(r) => r,
        Err(e @ ClientError::Status { status: 400, .. }) => {
            return Err(Failure::Usage(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(attr) = &args.min_attr {
        result = select_min(&result, attr);
    }
    if let Some(path) = &args.dot {
        std::fs::write(path, to_dot(&result))
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    if json {
        return Ok(to_json(&result));
    }
    if result.targets.is_empty() {
        return Ok("no targets\n".into());
    }
    let mut out = String::new();
    for t in &result.targets {
        let _ = write!(out, "{}\t{}", t.type_label, t.identity);
        for (k, v) in &t.attributes {
            let v = match v {
                Scalar::Text(s) => s.clone(),
                Scalar::Number(n) => n.to_string(),
                Scalar::Boolean(b) => b.to_string(),
            };
            let _ = write!(out, "\t{k}={v}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Witness paths as a Graphviz digraph. Targets are labelled with their type
/// and identity, intermediate nodes with their id.
pub fn to_dot(result: &QueryResult) -> String {
    let mut out = String::from("digraph lineage {\n  rankdir=LR;\n");
    for t in &result.targets {
        let label = format!("{}\\n{}", t.type_label, t.identity).replace('"', "'");
        let _ = writeln!(out, "  \"{}\" [label=\"{label}\", shape=box];", t.node_id);
    }
    let mut seen = std::collections::BTreeSet::new();
    for path in &result.paths {
        for pair in path.windows(2) {
            if seen.insert((pair[0], pair[1])) {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", pair[0], pair[1]);
            }
        }
    }
    out.push_str("}\n");
    out
}

fn gen_fixture(params: FixtureParams, out: &Path, json: bool) -> Outcome {
    let fx = fixture::generate(params);
    let (spec_path, env_path) = fx
        .write_to(out)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", out.display())))?;
    if json {
        return Ok(to_json(&serde_json::json!({
            "spec": spec_path,
            "envelopes": env_path,
            "envelope_count": fx.envelopes.len(),
        })));
    }
    Ok(format!(
        "wrote {} and {} ({} envelopes)\n",
        spec_path.display(),
        env_path.display(),
        fx.envelopes.len()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use provsvc_core::{NodeId, TargetSummary};

    fn target(id: &str, mse: Option<f64>) -> TargetSummary {
        let mut attributes = provsvc_core::Attributes::new();
        if let Some(m) = mse {
            attributes.insert("mse".into(), Scalar::Number(m));
        }
        TargetSummary {
            node_id: NodeId::entity("PROJECTTRAINING", id),
            type_label: "PROJECTTRAINING".into(),
            identity: id.into(),
            attributes,
        }
    }

    #[test]
    fn min_attr_picks_smallest_numeric() {
        let targets = vec![
            target("a", Some(0.9)),
            target("b", None),
            target("c", Some(0.4)),
            target("d", Some(0.7)),
        ];
        let paths = targets.iter().map(|t| vec![t.node_id]).collect();
        let r = QueryResult {
            targets,
            paths,
            visited_count: 4,
            snapshot_epoch: 1,
        };
        let best = select_min(&r, "mse");
        assert_eq!(best.targets.len(), 1);
        assert_eq!(best.targets[0].identity, "c");
        assert_eq!(best.paths, vec![vec![best.targets[0].node_id]]);
        assert!(select_min(&r, "accuracy").targets.is_empty());
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from([
            "provsvc", "query", "--seed-type", "WELL", "--value", "1,2", "--direction",
            "forward", "--target", "PROJECTTRAINING", "--min-attr", "mse",
        ])
        .unwrap();
        let Command::Query(q) = cli.command else { panic!() };
        assert_eq!(q.values, ["1", "2"]);
        assert_eq!(q.request().direction, Direction::Forward);
        assert!(Cli::try_parse_from([
            "provsvc", "query", "--seed-type", "WELL", "--value", "1", "--direction",
            "up", "--target", "X",
        ])
        .is_err());
        let cli = Cli::try_parse_from(["provsvc", "load", "f", "--batch-size", "3", "--interval", "200ms"])
            .unwrap();
        assert!(matches!(cli.command, Command::Load { interval, .. } if interval == Duration::from_millis(200)));
    }
}
