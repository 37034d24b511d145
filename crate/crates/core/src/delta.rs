//! Expansion of envelopes into graph upserts.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::id::{surrogate_identity, EdgeId, NodeId};
use crate::model::{
    Attributes, DataItemValue, EdgeKind, EntityRef, IngestEnvelope, NodeKind, Scalar,
    WorkflowSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvNode {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub type_label: String,
    pub identity: String,
    #[serde(default)]
    pub attributes: Attributes,
}

impl ProvNode {
    pub fn entity(type_label: &str, identity: &str, attributes: Attributes) -> Self {
        Self {
            node_id: NodeId::entity(type_label, identity),
            kind: NodeKind::Entity,
            type_label: type_label.into(),
            identity: identity.into(),
            attributes,
        }
    }

    /// Activity node for a task execution. `type_label` is the transformation
    /// name and `identity` the task id.
    pub fn activity(
        workflow_execution_id: &str,
        task_id: &str,
        transformation: &str,
        attributes: Attributes,
    ) -> Self {
        Self {
            node_id: NodeId::activity(workflow_execution_id, task_id),
            kind: NodeKind::Activity,
            type_label: transformation.into(),
            identity: task_id.into(),
            attributes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvEdge {
    pub edge_id: EdgeId,
    pub kind: EdgeKind,
    pub src: NodeId,
    pub dst: NodeId,
}

impl ProvEdge {
    pub fn new(kind: EdgeKind, src: NodeId, dst: NodeId) -> Self {
        Self {
            edge_id: EdgeId::of(kind, src, dst),
            kind,
            src,
            dst,
        }
    }
}

/// Nodes and edges to upsert in one atomic batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub nodes: Vec<ProvNode>,
    pub edges: Vec<ProvEdge>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    pub fn extend(&mut self, other: GraphDelta) {
        self.nodes.extend(other.nodes);
        self.edges.extend(other.edges);
    }

    /// Adds `node`, merging attributes into an earlier entry with the same id.
    fn upsert(&mut self, node: ProvNode) {
        match self.nodes.iter_mut().find(|n| n.node_id == node.node_id) {
            Some(existing) => existing.attributes.extend(node.attributes),
            None => self.nodes.push(node),
        }
    }

    fn link(&mut self, edge: ProvEdge) {
        if !self.edges.iter().any(|e| e.edge_id == edge.edge_id) {
            self.edges.push(edge);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExpandError {
    #[error("data item of type `{type_label}` has no identity and no attributes to derive one")]
    MissingIdentity { type_label: String },
}

/// Activity attributes recorded alongside any task-level attributes.
pub const ATTR_TRANSFORMATION: &str = "transformation";
pub const ATTR_WORKFLOW_NAME: &str = "workflow_name";
pub const ATTR_WORKFLOW_EXECUTION_ID: &str = "workflow_execution_id";
pub const ATTR_STARTED_AT: &str = "started_at";
pub const ATTR_ENDED_AT: &str = "ended_at";

/// Turns one envelope into the nodes and edges it contributes.
///
/// One Activity keyed by `(workflow_execution_id, task_id)`, one Entity per
/// distinct `(type_label, identity)`, a Used edge per used item, a Generated
/// edge per generated item and a Derived edge per explicit link. Pure: equal
/// inputs give equal deltas.
pub fn expand_envelope(
    env: &IngestEnvelope,
    spec: &WorkflowSpec,
) -> Result<GraphDelta, ExpandError> {
    let mut delta = GraphDelta::default();

    let mut act_attrs = env.attributes.clone();
    act_attrs.insert(ATTR_TRANSFORMATION.into(), env.transformation.as_str().into());
    act_attrs.insert(ATTR_WORKFLOW_NAME.into(), env.workflow_name.as_str().into());
    act_attrs.insert(
        ATTR_WORKFLOW_EXECUTION_ID.into(),
        env.workflow_execution_id.as_str().into(),
    );
    act_attrs.insert(ATTR_STARTED_AT.into(), Scalar::Text(rfc3339(&env.started_at)));
    act_attrs.insert(ATTR_ENDED_AT.into(), Scalar::Text(rfc3339(&env.ended_at)));
    let activity = ProvNode::activity(
        &env.workflow_execution_id,
        &env.task_id,
        &env.transformation,
        act_attrs,
    );
    let activity_id = activity.node_id;
    delta.upsert(activity);

    for item in &env.used {
        let node = entity_node(item, spec)?;
        let id = node.node_id;
        delta.upsert(node);
        delta.link(ProvEdge::new(EdgeKind::Used, id, activity_id));
    }
    for item in &env.generated {
        let node = entity_node(item, spec)?;
        let id = node.node_id;
        delta.upsert(node);
        delta.link(ProvEdge::new(EdgeKind::Generated, activity_id, id));
    }
    for link in &env.derived {
        let from = entity_ref_id(&link.from)?;
        let to = entity_ref_id(&link.to)?;
        delta.link(ProvEdge::new(EdgeKind::Derived, from, to));
    }
    Ok(delta)
}

fn rfc3339(t: &chrono::DateTime<chrono::Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

fn entity_ref_id(r: &EntityRef) -> Result<NodeId, ExpandError> {
    if r.identity.is_empty() {
        return Err(ExpandError::MissingIdentity {
            type_label: r.type_label.clone(),
        });
    }
    Ok(NodeId::entity(&r.type_label, &r.identity))
}

/// Identity resolution order: explicit identity, then the value of the
/// spec's identifying attribute, then a digest of the attribute map.
pub fn resolve_identity(item: &DataItemValue, spec: &WorkflowSpec) -> Result<String, ExpandError> {
    if !item.identity.is_empty() {
        return Ok(item.identity.clone());
    }
    if let Some(value) = spec
        .identifying_attribute(&item.type_label)
        .and_then(|attr| item.attributes.get(attr))
    {
        let text = match value {
            Scalar::Text(s) => s.clone(),
            other => serde_json::to_string(other).unwrap_or_default(),
        };
        if !text.is_empty() {
            return Ok(text);
        }
    }
    if item.attributes.is_empty() {
        return Err(ExpandError::MissingIdentity {
            type_label: item.type_label.clone(),
        });
    }
    let canonical =
        serde_json::to_string(&item.attributes).expect("scalar maps always serialize");
    Ok(surrogate_identity(&item.type_label, &canonical))
}

fn entity_node(item: &DataItemValue, spec: &WorkflowSpec) -> Result<ProvNode, ExpandError> {
    let identity = resolve_identity(item, spec)?;
    Ok(ProvNode::entity(
        &item.type_label,
        &identity,
        item.attributes.clone(),
    ))
}

impl ProvNode {
    pub fn summary_label(&self) -> String {
        let mut s = self.type_label.clone();
        if !self.identity.is_empty() {
            s.push(':');
            s.push_str(&self.identity);
        }
        s
    }
}

impl core::fmt::Display for ProvNode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} {} ({})", self.kind, self.summary_label(), self.node_id)
    }
}
