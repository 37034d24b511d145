//! Seed → direction → target lineage queries.
//!
//! Paths have the shape
//! `/provenance/seeds/{SEED_TYPE}/values/{V1,V2,...}/direction/{forward|backward}/targets/{T1,T2,...}`.
//! Segments are percent-decoded after splitting on `/` and `,`, so `%2C`
//! carries a literal comma inside a value.

use alloc::borrow::Cow;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use crate::graph::{Direction, Snapshot};
use crate::id::NodeId;
use crate::model::{Attributes, NodeKind};

/// Target labels that match on node kind instead of type label.
pub const KIND_ENTITY: &str = "Entity";
pub const KIND_ACTIVITY: &str = "Activity";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderBy {
    pub attribute: String,
    pub order: SortOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub seed_type: String,
    pub seed_values: Vec<String>,
    pub direction: Direction,
    pub target_types: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_by_attribute: Option<OrderBy>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("malformed query path: {0}")]
    MalformedPath(String),
    #[error("invalid direction `{0}` (expected forward or backward)")]
    InvalidDirection(String),
}

const PREFIX: &str = "provenance";
const KEYWORDS: [&str; 4] = ["seeds", "values", "direction", "targets"];

/// Characters escaped when rendering a segment back into a path.
const SEGMENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'/')
    .add(b',')
    .add(b'?')
    .add(b'<')
    .add(b'>')
    .add(b'`')
    .add(b'{')
    .add(b'}');

pub fn parse_query_path(path: &str) -> Result<QueryRequest, QueryError> {
    let malformed = |why: &str| QueryError::MalformedPath(why.to_string());
    let rest = path
        .strip_prefix('/')
        .ok_or_else(|| malformed("path must start with `/`"))?;
    let segs: Vec<&str> = rest.split('/').collect();
    if segs.len() != 9 {
        return Err(QueryError::MalformedPath(alloc::format!(
            "expected 9 segments, found {}",
            segs.len()
        )));
    }
    if segs[0] != PREFIX {
        return Err(malformed("path must start with `/provenance`"));
    }
    for (i, kw) in KEYWORDS.iter().enumerate() {
        let at = 1 + 2 * i;
        if segs[at] != *kw {
            return Err(QueryError::MalformedPath(alloc::format!(
                "segment {} must be `{}`, found `{}`",
                at + 1,
                kw,
                segs[at]
            )));
        }
    }

    let seed_type = decode(segs[2])?;
    if seed_type.is_empty() {
        return Err(malformed("empty seed type"));
    }
    let seed_values = decode_list(segs[4], "values")?;
    let direction = decode(segs[6])?;
    let direction = direction
        .parse::<Direction>()
        .map_err(|_| QueryError::InvalidDirection(direction))?;
    let target_types = decode_list(segs[8], "targets")?;

    Ok(QueryRequest {
        seed_type,
        seed_values,
        direction,
        target_types,
        max_depth: None,
        order_by_attribute: None,
    })
}

fn decode(seg: &str) -> Result<String, QueryError> {
    percent_decode_str(seg)
        .decode_utf8()
        .map(Cow::into_owned)
        .map_err(|_| QueryError::MalformedPath(alloc::format!("`{}` is not valid UTF-8", seg)))
}

fn decode_list(seg: &str, what: &str) -> Result<Vec<String>, QueryError> {
    let items = seg
        .split(',')
        .map(decode)
        .collect::<Result<Vec<_>, _>>()?;
    if items.iter().any(String::is_empty) {
        return Err(QueryError::MalformedPath(alloc::format!("empty entry in {}", what)));
    }
    Ok(items)
}

impl QueryRequest {
    pub fn new(
        seed_type: impl Into<String>,
        seed_values: Vec<String>,
        direction: Direction,
        target_types: Vec<String>,
    ) -> Self {
        Self {
            seed_type: seed_type.into(),
            seed_values,
            direction,
            target_types,
            max_depth: None,
            order_by_attribute: None,
        }
    }

    /// Path form of the request; `max_depth` and ordering are not part of it.
    pub fn to_path(&self) -> String {
        let enc = |s: &str| utf8_percent_encode(s, SEGMENT).to_string();
        let list = |xs: &[String]| xs.iter().map(|s| enc(s)).collect::<Vec<_>>().join(",");
        alloc::format!(
            "/{}/seeds/{}/values/{}/direction/{}/targets/{}",
            PREFIX,
            enc(&self.seed_type),
            list(&self.seed_values),
            self.direction,
            list(&self.target_types)
        )
    }

    fn is_target(&self, kind: NodeKind, type_label: &str) -> bool {
        self.target_types.iter().any(|t| {
            t == type_label
                || (t == KIND_ENTITY && kind == NodeKind::Entity)
                || (t == KIND_ACTIVITY && kind == NodeKind::Activity)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub node_id: NodeId,
    pub type_label: String,
    pub identity: String,
    pub attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub targets: Vec<TargetSummary>,
    /// `paths[i]` is a shortest witness from a seed to `targets[i]`.
    pub paths: Vec<Vec<NodeId>>,
    pub visited_count: usize,
    pub snapshot_epoch: u64,
}

/// Multi-source breadth-first search from every resolved seed.
///
/// Target-typed nodes are reported and traversal continues through them; a
/// seed of a target type is itself a target with a single-node path.
pub fn traverse(snapshot: &Snapshot, req: &QueryRequest) -> QueryResult {
    let values: BTreeSet<&str> = req.seed_values.iter().map(String::as_str).collect();
    let seeds: BTreeSet<NodeId> = values
        .into_iter()
        .flat_map(|v| snapshot.find_by_type_value(&req.seed_type, v))
        .collect();

    let graph = snapshot.graph();
    let mut parent: BTreeMap<NodeId, Option<NodeId>> = BTreeMap::new();
    let mut queue: VecDeque<(NodeId, u32)> = VecDeque::new();
    for &s in &seeds {
        parent.insert(s, None);
        queue.push_back((s, 0));
    }

    let mut hits: Vec<(u32, NodeId)> = Vec::new();
    while let Some((id, depth)) = queue.pop_front() {
        if let Some(node) = graph.node(&id) {
            if req.is_target(node.kind, &node.type_label) {
                hits.push((depth, id));
            }
        }
        if req.max_depth.is_some_and(|m| depth >= m) {
            continue;
        }
        for (_, next) in graph.adjacent(id, req.direction) {
            if let alloc::collections::btree_map::Entry::Vacant(slot) = parent.entry(next) {
                slot.insert(Some(id));
                queue.push_back((next, depth + 1));
            }
        }
    }

    match &req.order_by_attribute {
        None => hits.sort(),
        Some(order) => {
            let key = |id: &NodeId| {
                graph
                    .node(id)
                    .and_then(|n| n.attributes.get(&order.attribute))
                    .and_then(|v| v.as_f64())
            };
            hits.sort_by(|a, b| {
                let ord = match (key(&a.1), key(&b.1)) {
                    (Some(x), Some(y)) => match order.order {
                        SortOrder::Asc => x.total_cmp(&y),
                        SortOrder::Desc => y.total_cmp(&x),
                    },
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                };
                ord.then_with(|| a.cmp(b))
            });
        }
    }

    let mut targets = Vec::with_capacity(hits.len());
    let mut paths = Vec::with_capacity(hits.len());
    for (_, id) in hits {
        let node = graph.node(&id).expect("visited nodes exist in the snapshot");
        targets.push(TargetSummary {
            node_id: id,
            type_label: node.type_label.clone(),
            identity: node.identity.clone(),
            attributes: node.attributes.clone(),
        });
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(n) = cur {
            path.push(n);
            cur = parent.get(&n).copied().flatten();
        }
        path.reverse();
        paths.push(path);
    }

    QueryResult {
        targets,
        paths,
        visited_count: parent.len(),
        snapshot_epoch: snapshot.epoch(),
    }
}
