use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use provsvc_core::{validate_spec, ValidationReport, WorkflowSpec};

/// Registered workflow specs, latest version per name.
#[derive(Default)]
pub struct SpecRegistry {
    specs: RwLock<HashMap<String, Arc<WorkflowSpec>>>,
}

impl SpecRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and stores `spec`, assigning the next version for its name.
    pub fn register(&self, mut spec: WorkflowSpec) -> Result<u64, ValidationReport> {
        let report = validate_spec(&spec);
        if !report.is_empty() {
            return Err(report);
        }
        let mut specs = self.specs.write().unwrap_or_else(|p| p.into_inner());
        spec.version = specs.get(&spec.name).map_or(1, |s| s.version + 1);
        let version = spec.version;
        specs.insert(spec.name.clone(), Arc::new(spec));
        Ok(version)
    }

    pub fn get(&self, name: &str) -> Option<Arc<WorkflowSpec>> {
        self.specs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(name)
            .cloned()
    }
}
