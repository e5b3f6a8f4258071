//! Validation reports shared by the ontology, scenario and condition checks.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One finding. `entity` is the textual id of the offending item (an entity
/// path, parameter path, element id, ...), kept as text so malformed ids can
/// still be named.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub entity: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidationReport {
    findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn error(&mut self, entity: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, entity, message);
    }

    pub fn warning(&mut self, entity: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, entity, message);
    }

    fn push(&mut self, severity: Severity, entity: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity,
            entity: entity.into(),
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.findings.extend(other.findings);
    }

    /// Sorts by entity path (segment-wise), then severity, then message.
    pub fn finish(mut self) -> Self {
        self.findings.sort_by(|a, b| {
            let ka: Vec<&str> = a.entity.split('/').collect();
            let kb: Vec<&str> = b.entity.split('/').collect();
            ka.cmp(&kb)
                .then(a.severity.cmp(&b.severity))
                .then_with(|| a.message.cmp(&b.message))
        });
        self.findings.dedup();
        self
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    /// True if some finding names `entity`.
    pub fn mentions(&self, entity: &str) -> bool {
        self.findings.iter().any(|f| f.entity == entity)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return writeln!(f, "OK");
        }
        for finding in &self.findings {
            let sev = match finding.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{sev}: {}: {}", finding.entity, finding.message)?;
        }
        Ok(())
    }
}
