//! Prospective (workflow spec) and retrospective (envelope) provenance types.
//!
//! The JSON shape of these types is the wire and file format shared by the
//! service, the CLI and instrumentation clients.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Scalar attribute value. Nested structures are flattened by the producer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Boolean(bool),
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Text(s.into())
    }
}

impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Text(s)
    }
}

impl From<f64> for Scalar {
    fn from(n: f64) -> Self {
        Scalar::Number(n)
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Boolean(b)
    }
}

pub type Attributes = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Number,
    Boolean,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub value_kind: ValueKind,
    #[serde(default)]
    pub identifying: bool,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, value_kind: ValueKind) -> Self {
        Self {
            name: name.into(),
            value_kind,
            identifying: false,
        }
    }

    pub fn identifying(name: impl Into<String>, value_kind: ValueKind) -> Self {
        Self {
            identifying: true,
            ..Self::new(name, value_kind)
        }
    }
}

/// A data-item type on one side (input or output) of a transformation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataTypeSpec {
    pub type_label: String,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
}

impl DataTypeSpec {
    pub fn new(type_label: impl Into<String>, attributes: Vec<AttributeSpec>) -> Self {
        Self {
            type_label: type_label.into(),
            attributes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformationSpec {
    pub name: String,
    #[serde(default)]
    pub inputs: Vec<DataTypeSpec>,
    #[serde(default)]
    pub outputs: Vec<DataTypeSpec>,
}

impl TransformationSpec {
    pub fn declares_input(&self, type_label: &str) -> bool {
        self.inputs.iter().any(|d| d.type_label == type_label)
    }

    pub fn declares_output(&self, type_label: &str) -> bool {
        self.outputs.iter().any(|d| d.type_label == type_label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataflow {
    pub producer_transformation: String,
    pub type_label: String,
    pub consumer_transformation: String,
}

impl Dataflow {
    pub fn new(producer: &str, type_label: &str, consumer: &str) -> Self {
        Self {
            producer_transformation: producer.into(),
            type_label: type_label.into(),
            consumer_transformation: consumer.into(),
        }
    }
}

/// Prospective provenance: the static structure of a workflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub name: String,
    /// Assigned by the registry; a client-supplied value is overwritten.
    #[serde(default)]
    pub version: u64,
    pub transformations: Vec<TransformationSpec>,
    #[serde(default)]
    pub dataflow: Vec<Dataflow>,
}

impl WorkflowSpec {
    pub fn transformation(&self, name: &str) -> Option<&TransformationSpec> {
        self.transformations.iter().find(|t| t.name == name)
    }

    /// Name of the identifying attribute declared for `type_label`, if any
    /// occurrence of the type in the spec marks one.
    pub fn identifying_attribute(&self, type_label: &str) -> Option<&str> {
        self.transformations
            .iter()
            .flat_map(|t| t.inputs.iter().chain(t.outputs.iter()))
            .filter(|d| d.type_label == type_label)
            .flat_map(|d| d.attributes.iter())
            .find(|a| a.identifying)
            .map(|a| a.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Entity,
    Activity,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Entity => "Entity",
            NodeKind::Activity => "Activity",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Data dependency. Used: Entity → Activity, Generated: Activity → Entity,
/// Derived: Entity → Entity. Orientation always follows the dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Used,
    Generated,
    Derived,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Used => "Used",
            EdgeKind::Generated => "Generated",
            EdgeKind::Derived => "Derived",
        }
    }

    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeKind::Used => (NodeKind::Entity, NodeKind::Activity),
            EdgeKind::Generated => (NodeKind::Activity, NodeKind::Entity),
            EdgeKind::Derived => (NodeKind::Entity, NodeKind::Entity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItemValue {
    pub type_label: String,
    /// Value of the identifying attribute; may be empty only when the spec
    /// declares no identifying attribute for the type.
    #[serde(default)]
    pub identity: String,
    #[serde(default)]
    pub attributes: Attributes,
}

impl DataItemValue {
    pub fn new(type_label: impl Into<String>, identity: impl Into<String>) -> Self {
        Self {
            type_label: type_label.into(),
            identity: identity.into(),
            attributes: Attributes::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<Scalar>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub type_label: String,
    pub identity: String,
}

/// Explicit entity-to-entity derivation; `to` was derived from `from`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedLink {
    pub from: EntityRef,
    pub to: EntityRef,
}

/// One task execution: what it used and what it generated.
///
/// Deserialization rejects `started_at > ended_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvelope")]
pub struct IngestEnvelope {
    pub workflow_execution_id: String,
    pub workflow_name: String,
    pub task_id: String,
    pub transformation: String,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    #[serde(default)]
    pub used: Vec<DataItemValue>,
    #[serde(default)]
    pub generated: Vec<DataItemValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derived: Vec<DerivedLink>,
    /// Task-level attributes recorded on the Activity node.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: Attributes,
}

#[derive(Deserialize)]
struct RawEnvelope {
    workflow_execution_id: String,
    workflow_name: String,
    task_id: String,
    transformation: String,
    started_at: DateTime<Utc>,
    ended_at: DateTime<Utc>,
    #[serde(default)]
    used: Vec<DataItemValue>,
    #[serde(default)]
    generated: Vec<DataItemValue>,
    #[serde(default)]
    derived: Vec<DerivedLink>,
    #[serde(default)]
    attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("envelope ends before it starts ({ended_at} < {started_at})")]
pub struct TimeOrderError {
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
}

impl TryFrom<RawEnvelope> for IngestEnvelope {
    type Error = TimeOrderError;

    fn try_from(r: RawEnvelope) -> Result<Self, Self::Error> {
        if r.started_at > r.ended_at {
            return Err(TimeOrderError {
                started_at: r.started_at,
                ended_at: r.ended_at,
            });
        }
        Ok(IngestEnvelope {
            workflow_execution_id: r.workflow_execution_id,
            workflow_name: r.workflow_name,
            task_id: r.task_id,
            transformation: r.transformation,
            started_at: r.started_at,
            ended_at: r.ended_at,
            used: r.used,
            generated: r.generated,
            derived: r.derived,
            attributes: r.attributes,
        })
    }
}

impl IngestEnvelope {
    /// Builds an envelope, checking the time-order invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        workflow_execution_id: impl Into<String>,
        workflow_name: impl Into<String>,
        task_id: impl Into<String>,
        transformation: impl Into<String>,
        started_at: DateTime<Utc>,
        ended_at: DateTime<Utc>,
        used: Vec<DataItemValue>,
        generated: Vec<DataItemValue>,
    ) -> Result<Self, TimeOrderError> {
        RawEnvelope {
            workflow_execution_id: workflow_execution_id.into(),
            workflow_name: workflow_name.into(),
            task_id: task_id.into(),
            transformation: transformation.into(),
            started_at,
            ended_at,
            used,
            generated,
            derived: Vec::new(),
            attributes: Attributes::new(),
        }
        .try_into()
    }
}
