//! Provenance data model, snapshot graph and lineage traversal.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): the
//! workflow/envelope model and its validation, expansion of envelopes into
//! graph deltas, the persistent epoch-stamped graph, and the
//! seed → direction → target query engine. IO, queues and HTTP live in the
//! `provsvc` crate.

#![no_std]

extern crate alloc;

pub mod delta;
pub mod graph;
pub mod id;
pub mod model;
pub mod query;
pub mod validate;

pub use delta::{expand_envelope, resolve_identity, ExpandError, GraphDelta, ProvEdge, ProvNode};
pub use graph::{Direction, GraphError, GraphStats, InvalidDirection, ProvGraph, Snapshot};
pub use id::{EdgeId, NodeId};
pub use model::{
    AttributeSpec, Attributes, DataItemValue, DataTypeSpec, Dataflow, DerivedLink, EdgeKind,
    EntityRef, IngestEnvelope, NodeKind, Scalar, TimeOrderError, TransformationSpec, ValueKind,
    WorkflowSpec,
};
pub use query::{
    parse_query_path, traverse, OrderBy, QueryError, QueryRequest, QueryResult, SortOrder,
    TargetSummary,
};
pub use validate::{validate_envelope, validate_spec, ValidationReport, Violation, ViolationCode};
