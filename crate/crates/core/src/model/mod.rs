//! In-memory model representation shared by every stage of the engine.
//!
//! A [`Model`] is a typed object graph: an ordered list of objects, each with a
//! class name, string-valued attributes and references to other objects of the
//! same model. Two readers produce it: the canonical JSON interchange format
//! ([`parse_model_json`]) and a small XMI subset ([`parse_model_xmi`]).

mod json;
mod validate;
mod xmi;

use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{parse_model_json, to_json, to_json_pretty};
pub use validate::{validate_model, Issue, ValidationReport};
pub use xmi::parse_model_xmi;

/// A model: the unit of indexing and querying.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Model {
    pub model_type: String,
    pub objects: Vec<ModelObject>,
    pub source_uri: String,
}

/// One object of a model.
///
/// Map equality ignores key order; list order inside each entry is significant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelObject {
    pub id: String,
    pub class_name: String,
    pub attributes: IndexMap<String, Vec<String>>,
    pub references: IndexMap<String, Vec<String>>,
}

impl Model {
    pub fn new(model_type: impl Into<String>) -> Self {
        Model {
            model_type: model_type.into(),
            objects: Vec::new(),
            source_uri: String::new(),
        }
    }

    pub fn with_source_uri(mut self, uri: impl Into<String>) -> Self {
        self.source_uri = uri.into();
        self
    }

    pub fn object(&self, id: &str) -> Option<&ModelObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Number of objects whose class name is `class`.
    pub fn count_class(&self, class: &str) -> usize {
        self.objects.iter().filter(|o| o.class_name == class).count()
    }
}

impl ModelObject {
    pub fn new(id: impl Into<String>, class_name: impl Into<String>) -> Self {
        ModelObject {
            id: id.into(),
            class_name: class_name.into(),
            ..Default::default()
        }
    }

    pub fn with_attr(mut self, name: &str, value: impl Into<String>) -> Self {
        self.attributes
            .entry(name.to_string())
            .or_default()
            .push(value.into());
        self
    }

    pub fn with_ref(mut self, name: &str, target: impl Into<String>) -> Self {
        self.references
            .entry(name.to_string())
            .or_default()
            .push(target.into());
        self
    }

    /// First value of the `name` attribute, if any.
    pub fn name(&self) -> Option<&str> {
        self.attributes
            .get("name")
            .and_then(|v| v.first())
            .map(String::as_str)
    }
}

/// Input formats understood by the readers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFormat {
    Json,
    Xmi,
}

impl ModelFormat {
    /// Guess from a file extension: `.json` is canonical JSON, `.xmi`, `.ecore`,
    /// `.uml` and `.xml` are XMI.
    pub fn from_path(path: &Path) -> Option<ModelFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "json" => Some(ModelFormat::Json),
            "xmi" | "ecore" | "uml" | "xml" => Some(ModelFormat::Xmi),
            _ => None,
        }
    }

    /// Sniff the payload: JSON documents start with `{` after whitespace.
    pub fn sniff(bytes: &[u8]) -> ModelFormat {
        match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
            Some(b'{') => ModelFormat::Json,
            _ => ModelFormat::Xmi,
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ModelFormat::Json => "application/json",
            ModelFormat::Xmi => "application/xml",
        }
    }
}

impl fmt::Display for ModelFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFormat::Json => "json",
            ModelFormat::Xmi => "xmi",
        })
    }
}

/// Parse `bytes` in the given format.
pub fn parse_model(bytes: &[u8], format: ModelFormat) -> Result<Model, ModelError> {
    match format {
        ModelFormat::Json => parse_model_json(bytes),
        ModelFormat::Xmi => parse_model_xmi(bytes),
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: usize, message: String },
    #[error("unsupported XMI feature: {0}")]
    Unsupported(String),
    #[error("invalid model: {0}")]
    Invalid(ValidationReport),
}
