//! Structural checks for workflow specs and envelopes.
//!
//! Violations are data, not errors: callers get the complete list in one pass.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{DataItemValue, DataTypeSpec, IngestEnvelope, WorkflowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    EmptyName,
    DuplicateName,
    DanglingDataflow,
    CyclicDataflow,
    DuplicateIdentifyingAttribute,
    UnknownWorkflow,
    UnknownTransformation,
    UndeclaredType,
    MissingIdentity,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptyName => "empty-name",
            ViolationCode::DuplicateName => "duplicate-name",
            ViolationCode::DanglingDataflow => "dangling-dataflow",
            ViolationCode::CyclicDataflow => "cyclic-dataflow",
            ViolationCode::DuplicateIdentifyingAttribute => "duplicate-identifying-attribute",
            ViolationCode::UnknownWorkflow => "unknown-workflow",
            ViolationCode::UnknownTransformation => "unknown-transformation",
            ViolationCode::UndeclaredType => "undeclared-type",
            ViolationCode::MissingIdentity => "missing-identity",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn push(&mut self, code: ViolationCode, message: String) {
        self.violations.push(Violation { code, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}", v)?;
        }
        Ok(())
    }
}

pub fn validate_spec(spec: &WorkflowSpec) -> ValidationReport {
    let mut report = ValidationReport::default();

    if spec.name.is_empty() {
        report.push(ViolationCode::EmptyName, "workflow name is empty".into());
    }

    let mut seen = BTreeSet::new();
    for t in &spec.transformations {
        if t.name.is_empty() {
            report.push(ViolationCode::EmptyName, "transformation name is empty".into());
        } else if !seen.insert(t.name.as_str()) {
            report.push(
                ViolationCode::DuplicateName,
                format!("transformation `{}` declared more than once", t.name),
            );
        }
        check_side(&mut report, &t.name, "inputs", &t.inputs);
        check_side(&mut report, &t.name, "outputs", &t.outputs);
    }

    check_identifying(&mut report, spec);

    let mut graph: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for flow in &spec.dataflow {
        let producer = spec.transformation(&flow.producer_transformation);
        let consumer = spec.transformation(&flow.consumer_transformation);
        match (producer, consumer) {
            (Some(p), Some(c)) => {
                if !p.declares_output(&flow.type_label) || !c.declares_input(&flow.type_label) {
                    report.push(
                        ViolationCode::DanglingDataflow,
                        format!(
                            "`{}` is not an output of `{}` and an input of `{}`",
                            flow.type_label, p.name, c.name
                        ),
                    );
                }
                graph.entry(p.name.as_str()).or_default().insert(c.name.as_str());
            }
            _ => {
                for name in [&flow.producer_transformation, &flow.consumer_transformation] {
                    if spec.transformation(name).is_none() {
                        report.push(
                            ViolationCode::DanglingDataflow,
                            format!("dataflow references unknown transformation `{}`", name),
                        );
                    }
                }
            }
        }
    }

    let cyclic = cyclic_members(&graph);
    if !cyclic.is_empty() {
        let names: Vec<&str> = cyclic.into_iter().collect();
        report.push(
            ViolationCode::CyclicDataflow,
            format!("dataflow cycle through {}", names.join(", ")),
        );
    }

    report
}

fn check_side(report: &mut ValidationReport, owner: &str, side: &str, types: &[DataTypeSpec]) {
    let mut labels = BTreeSet::new();
    for d in types {
        if d.type_label.is_empty() {
            report.push(
                ViolationCode::EmptyName,
                format!("empty type label in `{}` {}", owner, side),
            );
        } else if !labels.insert(d.type_label.as_str()) {
            report.push(
                ViolationCode::DuplicateName,
                format!("type `{}` listed twice in `{}` {}", d.type_label, owner, side),
            );
        }
        let mut names = BTreeSet::new();
        for a in &d.attributes {
            if a.name.is_empty() {
                report.push(
                    ViolationCode::EmptyName,
                    format!("empty attribute name on `{}` in `{}`", d.type_label, owner),
                );
            } else if !names.insert(a.name.as_str()) {
                report.push(
                    ViolationCode::DuplicateName,
                    format!(
                        "attribute `{}` repeated on `{}` in `{}` {}",
                        a.name, d.type_label, owner, side
                    ),
                );
            }
        }
    }
}

fn check_identifying(report: &mut ValidationReport, spec: &WorkflowSpec) {
    let mut per_type: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in spec
        .transformations
        .iter()
        .flat_map(|t| t.inputs.iter().chain(t.outputs.iter()))
    {
        let ids = per_type.entry(d.type_label.as_str()).or_default();
        let mut local = 0;
        for a in d.attributes.iter().filter(|a| a.identifying) {
            local += 1;
            ids.insert(a.name.as_str());
        }
        if local > 1 {
            report.push(
                ViolationCode::DuplicateIdentifyingAttribute,
                format!("type `{}` marks {} identifying attributes", d.type_label, local),
            );
        }
    }
    for (label, ids) in per_type {
        if ids.len() > 1 {
            let names: Vec<&str> = ids.into_iter().collect();
            report.push(
                ViolationCode::DuplicateIdentifyingAttribute,
                format!(
                    "type `{}` has conflicting identifying attributes: {}",
                    label,
                    names.join(", ")
                ),
            );
        }
    }
}

/// Nodes left over after Kahn's algorithm: exactly those on or downstream of a
/// cycle.
fn cyclic_members<'a>(graph: &BTreeMap<&'a str, BTreeSet<&'a str>>) -> BTreeSet<&'a str> {
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    for (src, dsts) in graph {
        indegree.entry(src).or_insert(0);
        for d in dsts {
            *indegree.entry(d).or_insert(0) += 1;
        }
    }
    let mut ready: VecDeque<&str> = indegree
        .iter()
        .filter(|(_, &deg)| deg == 0)
        .map(|(n, _)| *n)
        .collect();
    while let Some(n) = ready.pop_front() {
        indegree.remove(n);
        if let Some(dsts) = graph.get(n) {
            for d in dsts {
                if let Some(deg) = indegree.get_mut(d) {
                    *deg -= 1;
                    if *deg == 0 {
                        ready.push_back(d);
                    }
                }
            }
        }
    }
    indegree.into_keys().collect()
}

/// Checks an envelope against the prospective structure of `spec`.
///
/// The report is empty iff the transformation exists, every used item's type
/// is a declared input, every generated item's type is a declared output, and
/// identity is present wherever the spec declares an identifying attribute.
pub fn validate_envelope(env: &IngestEnvelope, spec: &WorkflowSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let Some(t) = spec.transformation(&env.transformation) else {
        report.push(
            ViolationCode::UnknownTransformation,
            format!(
                "transformation `{}` is not declared in workflow `{}` v{}",
                env.transformation, spec.name, spec.version
            ),
        );
        return report;
    };

    let mut check = |items: &[DataItemValue], side: &str, declared: &dyn Fn(&str) -> bool| {
        for item in items {
            if !declared(&item.type_label) {
                report.push(
                    ViolationCode::UndeclaredType,
                    format!(
                        "`{}` does not declare `{}` among its {}",
                        t.name, item.type_label, side
                    ),
                );
            }
            if item.identity.is_empty() {
                if let Some(attr) = spec.identifying_attribute(&item.type_label) {
                    report.push(
                        ViolationCode::MissingIdentity,
                        format!(
                            "`{}` item has no value for identifying attribute `{}`",
                            item.type_label, attr
                        ),
                    );
                }
            }
        }
    };
    check(&env.used, "inputs", &|l| t.declares_input(l));
    check(&env.generated, "outputs", &|l| t.declares_output(l));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttributeSpec, Dataflow, TransformationSpec, ValueKind};
    use alloc::string::ToString;
    use alloc::vec;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn t(name: &str, inputs: &[&str], outputs: &[&str]) -> TransformationSpec {
        let side = |ls: &[&str]| {
            ls.iter()
                .map(|l| {
                    DataTypeSpec::new(*l, vec![AttributeSpec::identifying("id", ValueKind::Text)])
                })
                .collect()
        };
        TransformationSpec {
            name: name.into(),
            inputs: side(inputs),
            outputs: side(outputs),
        }
    }

    fn spec(ts: Vec<TransformationSpec>, flows: Vec<Dataflow>) -> WorkflowSpec {
        WorkflowSpec {
            name: "w".into(),
            version: 1,
            transformations: ts,
            dataflow: flows,
        }
    }

    #[test]
    fn minimal_valid_spec() {
        let s = spec(
            vec![t("A", &[], &["T"]), t("B", &["T"], &[])],
            vec![Dataflow::new("A", "T", "B")],
        );
        assert!(validate_spec(&s).is_empty(), "{}", validate_spec(&s));
    }

    #[test]
    fn dangling_dataflow_to_unknown_transformation() {
        let s = spec(vec![t("A", &[], &["T"])], vec![Dataflow::new("A", "T", "X")]);
        let r = validate_spec(&s);
        assert!(r.contains(ViolationCode::DanglingDataflow));
        assert!(r.to_string().contains("`X`"));
    }

    #[test]
    fn dangling_dataflow_on_undeclared_type() {
        let s = spec(
            vec![t("A", &[], &["T"]), t("B", &["U"], &[])],
            vec![Dataflow::new("A", "T", "B")],
        );
        assert!(validate_spec(&s).contains(ViolationCode::DanglingDataflow));
    }

    #[test]
    fn two_cycle_is_reported() {
        let s = spec(
            vec![t("A", &["U"], &["T"]), t("B", &["T"], &["U"])],
            vec![Dataflow::new("A", "T", "B"), Dataflow::new("B", "U", "A")],
        );
        let r = validate_spec(&s);
        assert!(r.contains(ViolationCode::CyclicDataflow));
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn duplicate_names_and_identifying() {
        let mut dup = t("A", &["T"], &[]);
        dup.inputs[0].attributes.push(AttributeSpec::identifying("other", ValueKind::Text));
        dup.inputs[0].attributes.push(AttributeSpec::new("id", ValueKind::Text));
        let s = spec(vec![dup, t("A", &[], &[])], vec![]);
        let r = validate_spec(&s);
        assert!(r.contains(ViolationCode::DuplicateName));
        assert!(r.contains(ViolationCode::DuplicateIdentifyingAttribute));
    }

    #[test]
    fn conflicting_identifying_across_transformations() {
        let a = t("A", &[], &["T"]);
        let mut b = t("B", &["T"], &[]);
        b.inputs[0].attributes = vec![AttributeSpec::identifying("key", ValueKind::Text)];
        let r = validate_spec(&spec(vec![a, b], vec![]));
        assert!(r.contains(ViolationCode::DuplicateIdentifyingAttribute));
    }

    fn env(transformation: &str, used: &[&str], generated: &[&str]) -> IngestEnvelope {
        let at = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        IngestEnvelope::new(
            "e",
            "w",
            "t1",
            transformation,
            at,
            at,
            used.iter().map(|l| DataItemValue::new(*l, "1")).collect(),
            generated.iter().map(|l| DataItemValue::new(*l, "1")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn envelope_checks() {
        let s = spec(
            vec![t("Train", &["WELL"], &["DATASET"])],
            vec![],
        );
        assert!(validate_envelope(&env("Train", &["WELL"], &[]), &s).is_empty());
        assert!(validate_envelope(&env("FeatureExtraction", &[], &[]), &s)
            .contains(ViolationCode::UnknownTransformation));
        let r = validate_envelope(&env("Train", &[], &["MODEL"]), &s);
        assert!(r.contains(ViolationCode::UndeclaredType));
        // WELL declared only as an input
        assert!(validate_envelope(&env("Train", &[], &["WELL"]), &s)
            .contains(ViolationCode::UndeclaredType));

        let mut missing = env("Train", &["WELL"], &[]);
        missing.used[0].identity.clear();
        assert!(validate_envelope(&missing, &s).contains(ViolationCode::MissingIdentity));
    }

    /// Independent acyclicity oracle: a relation is acyclic iff no node
    /// reaches itself in its transitive closure.
    fn has_cycle_oracle(n: usize, edges: &[(usize, usize)]) -> bool {
        let mut reach = vec![vec![false; n]; n];
        for &(a, b) in edges {
            reach[a][b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        (0..n).any(|i| reach[i][i])
    }

    proptest! {
        #[test]
        fn cycle_detection_matches_closure_oracle(
            n in 1usize..7,
            raw in proptest::collection::vec((0usize..7, 0usize..7), 0..14),
        ) {
            let edges: Vec<(usize, usize)> =
                raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let names: Vec<String> = (0..n).map(|i| format!("T{}", i)).collect();
            let ts = names.iter().map(|nm| t(nm, &["D"], &["D"])).collect();
            let flows = edges
                .iter()
                .map(|&(a, b)| Dataflow::new(&names[a], "D", &names[b]))
                .collect();
            let r = validate_spec(&spec(ts, flows));
            prop_assert_eq!(
                r.contains(ViolationCode::CyclicDataflow),
                has_cycle_oracle(n, &edges)
            );
        }
    }
}
