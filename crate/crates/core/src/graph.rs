//! Persistent provenance graph and epoch-stamped snapshots.
//!
//! Every structure is a persistent red-black tree, so cloning a graph is O(1)
//! and applying a batch copies only the touched paths. A [`Snapshot`] is an
//! immutable value: later batches produce new snapshots and never alter an
//! existing one.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rpds::{RedBlackTreeMapSync, RedBlackTreeSetSync};
use serde::{Deserialize, Serialize};

use crate::delta::{GraphDelta, ProvEdge, ProvNode};
use crate::id::{EdgeId, NodeId};
use crate::model::NodeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Along the dataflow: entity to the activity that used it, activity to
    /// what it generated.
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid direction `{0}` (expected forward or backward)")]
pub struct InvalidDirection(pub String);

impl FromStr for Direction {
    type Err = InvalidDirection;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(InvalidDirection(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge {edge_id} references node {missing} which is neither stored nor in the batch")]
    DanglingEdge { edge_id: EdgeId, missing: NodeId },
    #[error("edge {edge_id} of kind {kind} cannot connect {src_kind} to {dst_kind}")]
    EdgeEndpointMismatch {
        edge_id: EdgeId,
        kind: &'static str,
        src_kind: NodeKind,
        dst_kind: NodeKind,
    },
    #[error("edge id {edge_id} does not match its kind and endpoints")]
    EdgeIdMismatch { edge_id: EdgeId },
    #[error("entity node id {node_id} does not match its type label and identity")]
    NodeIdMismatch { node_id: NodeId },
    #[error("node {node_id} already stored as {stored}, batch says {given}")]
    KindConflict {
        node_id: NodeId,
        stored: NodeKind,
        given: NodeKind,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub epoch: u64,
}

type IndexKey = (String, String, NodeId);

#[derive(Clone, Default)]
pub struct ProvGraph {
    nodes: RedBlackTreeMapSync<NodeId, ProvNode>,
    edges: RedBlackTreeMapSync<EdgeId, ProvEdge>,
    out_adj: RedBlackTreeSetSync<(NodeId, EdgeId)>,
    in_adj: RedBlackTreeSetSync<(NodeId, EdgeId)>,
    by_type_value: RedBlackTreeSetSync<IndexKey>,
}

impl fmt::Debug for ProvGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProvGraph")
            .field("nodes", &self.nodes.size())
            .field("edges", &self.edges.size())
            .finish()
    }
}

impl ProvGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.size()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.size()
    }

    pub fn node(&self, id: &NodeId) -> Option<&ProvNode> {
        self.nodes.get(id)
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&ProvEdge> {
        self.edges.get(id)
    }

    /// Nodes in node-id order.
    pub fn nodes(&self) -> impl Iterator<Item = &ProvNode> {
        self.nodes.values()
    }

    /// Edges in edge-id order.
    pub fn edges(&self) -> impl Iterator<Item = &ProvEdge> {
        self.edges.values()
    }

    /// Upserts `delta`, returning the new graph and whether anything changed.
    /// `self` is never modified, so a rejected batch leaves no trace.
    pub fn apply(&self, delta: &GraphDelta) -> Result<(ProvGraph, bool), GraphError> {
        let mut next = self.clone();
        let mut changed = false;

        for node in &delta.nodes {
            if node.kind == NodeKind::Entity
                && node.node_id != NodeId::entity(&node.type_label, &node.identity)
            {
                return Err(GraphError::NodeIdMismatch {
                    node_id: node.node_id,
                });
            }
            changed |= next.upsert_node(node)?;
        }

        for edge in &delta.edges {
            if edge.edge_id != EdgeId::of(edge.kind, edge.src, edge.dst) {
                return Err(GraphError::EdgeIdMismatch {
                    edge_id: edge.edge_id,
                });
            }
            let endpoint = |id: NodeId| {
                next.nodes
                    .get(&id)
                    .map(|n| n.kind)
                    .ok_or(GraphError::DanglingEdge {
                        edge_id: edge.edge_id,
                        missing: id,
                    })
            };
            let src_kind = endpoint(edge.src)?;
            let dst_kind = endpoint(edge.dst)?;
            if (src_kind, dst_kind) != edge.kind.endpoints() {
                return Err(GraphError::EdgeEndpointMismatch {
                    edge_id: edge.edge_id,
                    kind: edge.kind.as_str(),
                    src_kind,
                    dst_kind,
                });
            }
            if !next.edges.contains_key(&edge.edge_id) {
                next.edges.insert_mut(edge.edge_id, *edge);
                next.out_adj.insert_mut((edge.src, edge.edge_id));
                next.in_adj.insert_mut((edge.dst, edge.edge_id));
                changed = true;
            }
        }

        Ok((next, changed))
    }

    /// Last writer wins per attribute key; kind, label and identity of a
    /// stored node are fixed.
    fn upsert_node(&mut self, node: &ProvNode) -> Result<bool, GraphError> {
        match self.nodes.get(&node.node_id) {
            Some(stored) => {
                if stored.kind != node.kind {
                    return Err(GraphError::KindConflict {
                        node_id: node.node_id,
                        stored: stored.kind,
                        given: node.kind,
                    });
                }
                let differs = node
                    .attributes
                    .iter()
                    .any(|(k, v)| stored.attributes.get(k) != Some(v));
                if differs {
                    let mut merged = stored.clone();
                    merged
                        .attributes
                        .extend(node.attributes.iter().map(|(k, v)| (k.clone(), v.clone())));
                    self.nodes.insert_mut(node.node_id, merged);
                }
                Ok(differs)
            }
            None => {
                self.by_type_value.insert_mut((
                    node.type_label.clone(),
                    node.identity.clone(),
                    node.node_id,
                ));
                self.nodes.insert_mut(node.node_id, node.clone());
                Ok(true)
            }
        }
    }

    /// Exact, case-sensitive match on type label and identity.
    pub fn find_by_type_value(&self, type_label: &str, identity: &str) -> Vec<NodeId> {
        let lo = (type_label.to_string(), identity.to_string(), NodeId::MIN);
        let hi = (type_label.to_string(), identity.to_string(), NodeId::MAX);
        self.by_type_value.range(lo..=hi).map(|(_, _, id)| *id).collect()
    }

    /// Adjacent edges in edge-id order, each paired with the node on the far
    /// side.
    pub fn neighbors(
        &self,
        node_id: NodeId,
        direction: Direction,
    ) -> Result<Vec<(ProvEdge, NodeId)>, GraphError> {
        if !self.nodes.contains_key(&node_id) {
            return Err(GraphError::UnknownNode(node_id));
        }
        Ok(self.adjacent(node_id, direction).collect())
    }

    pub(crate) fn adjacent(
        &self,
        node_id: NodeId,
        direction: Direction,
    ) -> impl Iterator<Item = (ProvEdge, NodeId)> + '_ {
        let adj = match direction {
            Direction::Forward => &self.out_adj,
            Direction::Backward => &self.in_adj,
        };
        adj.range((node_id, EdgeId::MIN)..=(node_id, EdgeId::MAX))
            .filter_map(move |(_, eid)| {
                let edge = *self.edges.get(eid)?;
                let other = match direction {
                    Direction::Forward => edge.dst,
                    Direction::Backward => edge.src,
                };
                Some((edge, other))
            })
    }
}

/// Read view of the graph as of one epoch.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    epoch: u64,
    graph: ProvGraph,
}

impl Snapshot {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn graph(&self) -> &ProvGraph {
        &self.graph
    }

    /// The snapshot that results from applying `delta`. A batch that changes
    /// nothing (empty, or fully redundant) keeps the current epoch.
    pub fn apply(&self, delta: &GraphDelta) -> Result<Snapshot, GraphError> {
        if delta.is_empty() {
            return Ok(self.clone());
        }
        let (graph, changed) = self.graph.apply(delta)?;
        if !changed {
            return Ok(self.clone());
        }
        Ok(Snapshot {
            epoch: self.epoch + 1,
            graph,
        })
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            node_count: self.graph.node_count(),
            edge_count: self.graph.edge_count(),
            epoch: self.epoch,
        }
    }

    pub fn find_by_type_value(&self, type_label: &str, identity: &str) -> Vec<NodeId> {
        self.graph.find_by_type_value(type_label, identity)
    }

    pub fn neighbors(
        &self,
        node_id: NodeId,
        direction: Direction,
    ) -> Result<Vec<(ProvEdge, NodeId)>, GraphError> {
        self.graph.neighbors(node_id, direction)
    }

    pub fn node(&self, id: &NodeId) -> Option<&ProvNode> {
        self.graph.node(id)
    }
}
