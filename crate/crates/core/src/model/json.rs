//! Canonical JSON model format.
//!
//! ```json
//! { "modelType": "uml",
//!   "objects": [ { "id": "s1", "class": "State",
//!                  "attrs": { "name": ["Talking"] },
//!                  "refs":  { "outgoing": ["t1"] } } ] }
//! ```
//!
//! `attrs` and `refs` are optional. Attribute values may be written as JSON
//! numbers or booleans; they are stored as their canonical string rendering.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{validate_model, Model, ModelError, ModelObject};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "modelType")]
    model_type: String,
    objects: Vec<RawObject>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: String,
    class: String,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    attrs: IndexMap<String, Vec<Value>>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    refs: IndexMap<String, Vec<String>>,
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start = bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .nth(line.saturating_sub(2))
        .map(|(i, _)| i + 1)
        .filter(|_| line > 1)
        .unwrap_or(0);
    // 1-based column -> 0-based index of the offending byte
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Parse a model from canonical JSON. The result is validated; a model that
/// violates an invariant is rejected with [`ModelError::Invalid`].
pub fn parse_model_json(bytes: &[u8]) -> Result<Model, ModelError> {
    let raw: RawModel = serde_json::from_slice(bytes).map_err(|e| ModelError::Json {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let mut objects = Vec::with_capacity(raw.objects.len());
    for o in raw.objects {
        let mut attributes = IndexMap::with_capacity(o.attrs.len());
        for (name, values) in o.attrs {
            let mut out = Vec::with_capacity(values.len());
            for v in &values {
                let s = scalar_to_string(v).ok_or_else(|| ModelError::Json {
                    offset: 0,
                    message: format!(
                        "object '{}': attribute '{name}' holds a non-scalar value {v}",
                        o.id
                    ),
                })?;
                out.push(s);
            }
            attributes.insert(name, out);
        }
        objects.push(ModelObject {
            id: o.id,
            class_name: o.class,
            attributes,
            references: o.refs,
        });
    }

    let model = Model {
        model_type: raw.model_type,
        objects,
        source_uri: String::new(),
    };
    let report = validate_model(&model);
    if !report.is_valid() {
        return Err(ModelError::Invalid(report));
    }
    Ok(model)
}

fn to_raw(m: &Model) -> RawModel {
    RawModel {
        model_type: m.model_type.clone(),
        objects: m
            .objects
            .iter()
            .map(|o| RawObject {
                id: o.id.clone(),
                class: o.class_name.clone(),
                attrs: o
                    .attributes
                    .iter()
                    .map(|(k, v)| (k.clone(), v.iter().cloned().map(Value::String).collect()))
                    .collect(),
                refs: o.references.clone(),
            })
            .collect(),
    }
}

/// Serialize to compact canonical JSON. Inverse of [`parse_model_json`]
/// (the `source_uri` is not part of the format).
pub fn to_json(m: &Model) -> String {
    serde_json::to_string(&to_raw(m)).expect("model serialization is infallible")
}

pub fn to_json_pretty(m: &Model) -> String {
    serde_json::to_string_pretty(&to_raw(m)).expect("model serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model() {
        let m = parse_model_json(br#"{"modelType":"uml","objects":[]}"#).unwrap();
        assert_eq!(m.model_type, "uml");
        assert!(m.objects.is_empty());
    }

    #[test]
    fn single_state() {
        let m = parse_model_json(
            br#"{"modelType":"uml","objects":[{"id":"s1","class":"State","attrs":{"name":["Talking"]}}]}"#,
        )
        .unwrap();
        assert_eq!(m.objects.len(), 1);
        assert_eq!(m.objects[0].class_name, "State");
        assert_eq!(m.objects[0].attributes["name"], vec!["Talking".to_string()]);
    }

    #[test]
    fn dangling_reference_rejected() {
        let err = parse_model_json(
            br#"{"modelType":"uml","objects":[{"id":"s1","class":"State","refs":{"outgoing":["zz"]}}]}"#,
        )
        .unwrap_err();
        match err {
            ModelError::Invalid(r) => {
                assert!(r.errors[0].message.contains("s1"));
                assert!(r.errors[0].message.contains("zz"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse_model_json(
            br#"{"modelType":"uml","objects":[{"id":"a","class":"X"},{"id":"a","class":"Y"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Invalid(_)));
    }

    #[test]
    fn malformed_json_reports_offset() {
        let text = b"{\"modelType\":\"uml\",\n \"objects\": [ }";
        match parse_model_json(text).unwrap_err() {
            ModelError::Json { offset, .. } => {
                assert_eq!(text[offset], b'}', "offset {offset}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn primitive_values_become_canonical_strings() {
        let m = parse_model_json(
            br#"{"modelType":"ecore","objects":[{"id":"c","class":"EClass","attrs":{"abstract":[true],"lowerBound":[0, 12]}}]}"#,
        )
        .unwrap();
        assert_eq!(m.objects[0].attributes["abstract"], vec!["true"]);
        assert_eq!(m.objects[0].attributes["lowerBound"], vec!["0", "12"]);
    }

    #[test]
    fn key_order_irrelevant() {
        let a = parse_model_json(
            br#"{"modelType":"x","objects":[{"id":"o","class":"C","attrs":{"a":["1"],"b":["2"]}}]}"#,
        )
        .unwrap();
        let b = parse_model_json(
            br#"{"objects":[{"attrs":{"b":["2"],"a":["1"]},"class":"C","id":"o"}],"modelType":"x"}"#,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_value_list_rejected() {
        let err = parse_model_json(
            br#"{"modelType":"x","objects":[{"id":"o","class":"C","attrs":{"a":[]}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Invalid(_)));
    }
}
