use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::Model;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub object_id: String,
    pub message: String,
}

/// Every invariant violation found in a model. Valid iff `errors` is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, id: &str, message: String) {
        self.errors.push(Issue {
            object_id: id.to_string(),
            message,
        });
    }

    fn warn(&mut self, id: &str, message: String) {
        self.warnings.push(Issue {
            object_id: id.to_string(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown: Vec<String> = self
            .errors
            .iter()
            .take(5)
            .map(|i| format!("[{}] {}", i.object_id, i.message))
            .collect();
        write!(f, "{} error(s): {}", self.errors.len(), shown.join("; "))?;
        if self.errors.len() > shown.len() {
            write!(f, "; ...")?;
        }
        Ok(())
    }
}

/// Check a model against its structural invariants.
pub fn validate_model(m: &Model) -> ValidationReport {
    let mut report = ValidationReport::default();
    if m.model_type.is_empty() {
        report.error("", "model type is empty".to_string());
    }

    let mut ids = HashSet::with_capacity(m.objects.len());
    for o in &m.objects {
        if o.id.is_empty() {
            report.error("", format!("object of class '{}' has an empty id", o.class_name));
        } else if !ids.insert(o.id.as_str()) {
            report.error(&o.id, format!("duplicate object id '{}'", o.id));
        }
    }

    for o in &m.objects {
        if o.class_name.is_empty() {
            report.error(&o.id, "empty class name".to_string());
        }
        for (name, values) in &o.attributes {
            if name.is_empty() {
                report.error(&o.id, "empty attribute name".to_string());
            }
            if values.is_empty() {
                report.error(&o.id, format!("attribute '{name}' has an empty value list"));
            }
            if values.iter().any(|v| v.trim().is_empty()) {
                report.warn(&o.id, format!("attribute '{name}' has a blank value"));
            }
        }
        for (name, targets) in &o.references {
            if name.is_empty() {
                report.error(&o.id, "empty reference name".to_string());
            }
            if targets.is_empty() {
                report.warn(&o.id, format!("reference '{name}' has no targets"));
            }
            for t in targets {
                if !ids.contains(t.as_str()) {
                    report.error(
                        &o.id,
                        format!("dangling reference '{name}' from '{}' to '{t}'", o.id),
                    );
                }
            }
        }
    }
    report
}
