use chrono::{TimeZone, Utc};
use provsvc_core::{
    AttributeSpec, DataItemValue, DataTypeSpec, IngestEnvelope, TransformationSpec, ValueKind,
    WorkflowSpec,
};

/// Workflow `w` with one transformation `train`: WELL in, PROJECTTRAINING out.
pub fn small_spec() -> WorkflowSpec {
    WorkflowSpec {
        name: "w".into(),
        version: 0,
        transformations: vec![TransformationSpec {
            name: "train".into(),
            inputs: vec![DataTypeSpec::new(
                "WELL",
                vec![AttributeSpec::identifying("well_id", ValueKind::Text)],
            )],
            outputs: vec![DataTypeSpec::new(
                "PROJECTTRAINING",
                vec![
                    AttributeSpec::identifying("model_id", ValueKind::Text),
                    AttributeSpec::new("mse", ValueKind::Number),
                ],
            )],
        }],
        dataflow: vec![],
    }
}

pub fn envelope(task: &str, transformation: &str, wells: &[&str], models: &[&str]) -> IngestEnvelope {
    let at = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    IngestEnvelope::new(
        "exec-1",
        "w",
        task,
        transformation,
        at,
        at,
        wells.iter().map(|w| DataItemValue::new("WELL", *w)).collect(),
        models
            .iter()
            .map(|m| DataItemValue::new("PROJECTTRAINING", *m))
            .collect(),
    )
    .unwrap()
}
