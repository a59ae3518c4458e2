//! Storage keys for paths.
//!
//! A path is serialized as `(v0,e0,v1,...)` and split in two. Paths starting
//! at an attribute value keep their first hop in the row key
//! (`(hang,name,Transition`), paths starting at a class keep only the class
//! (`(Region`). The rest, closed by `)`, is the column qualifier; a path that
//! is all prefix gets the qualifier `)`.
//!
//! Labels are escaped with a backslash before `(`, `)`, `,` and `\`. The last
//! vertex of a path of length two or more may be an attribute value or a
//! class; a class there is written with the marker `\$` in front.

use crate::graph::{PathString, VertexKind, VertexLabel};

const CLASS_MARKER: &str = "\\$";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyError {
    #[error("path cannot be encoded: {0}")]
    NonCanonical(String),
    #[error("malformed key: {0}")]
    Malformed(String),
}

/// A path split into row key and column qualifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SplitKey {
    pub row_key: Vec<u8>,
    pub qualifier: Vec<u8>,
}

impl SplitKey {
    /// `row_key` followed by `qualifier`: the full serialized path.
    pub fn join(&self) -> Vec<u8> {
        let mut out = self.row_key.clone();
        out.extend_from_slice(&self.qualifier);
        out
    }
}

pub fn encode_segment(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if matches!(c, '(' | ')' | ',' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

pub fn decode_segment(encoded: &str) -> Result<String, KeyError> {
    let mut out = String::with_capacity(encoded.len());
    let mut chars = encoded.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e @ ('(' | ')' | ',' | '\\')) => out.push(e),
                Some(e) => return Err(KeyError::Malformed(format!("bad escape \\{e}"))),
                None => return Err(KeyError::Malformed("dangling backslash".into())),
            },
            '(' | ')' | ',' => {
                return Err(KeyError::Malformed(format!("unescaped '{c}' in segment")))
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

/// Check the shape rules a stored path must follow: attribute values only
/// next to classes and never inside a path, singletons are classes, and a
/// path starting at a class has no single hop.
pub fn check_canonical(p: &PathString) -> Result<(), KeyError> {
    let v = p.vertices();
    let n = p.len();
    let bad = |why: &str| Err(KeyError::NonCanonical(format!("{why}: {p}")));
    if n == 0 {
        if v[0].kind != VertexKind::Class {
            return bad("a single-vertex path must be a class");
        }
        return Ok(());
    }
    if v[0].kind == VertexKind::Class && n == 1 {
        return bad("a path of length 1 must start at an attribute value");
    }
    for (i, x) in v.iter().enumerate() {
        let interior = i > 0 && i < n;
        if interior && x.kind != VertexKind::Class {
            return bad("attribute value inside a path");
        }
    }
    if n == 1 && v[1].kind != VertexKind::Class {
        return bad("two adjacent attribute values");
    }
    if v.iter().any(|x| x.text.is_empty()) || p.edges().iter().any(String::is_empty) {
        return bad("empty label");
    }
    Ok(())
}

fn push_vertex(out: &mut String, v: &VertexLabel, terminal_marker: bool) {
    if terminal_marker && v.kind == VertexKind::Class {
        out.push_str(CLASS_MARKER);
    }
    out.push_str(&encode_segment(&v.text));
}

pub fn split_path(p: &PathString) -> Result<SplitKey, KeyError> {
    check_canonical(p)?;
    let v = p.vertices();
    let e = p.edges();
    let n = p.len();
    let mut row = String::from("(");
    let rest_from;
    if v[0].is_attribute() {
        row.push_str(&encode_segment(&v[0].text));
        row.push(',');
        row.push_str(&encode_segment(&e[0]));
        row.push(',');
        row.push_str(&encode_segment(&v[1].text));
        rest_from = 1;
    } else {
        row.push_str(&encode_segment(&v[0].text));
        rest_from = 0;
    }
    let mut qual = String::new();
    for i in rest_from..n {
        qual.push(',');
        qual.push_str(&encode_segment(&e[i]));
        qual.push(',');
        push_vertex(&mut qual, &v[i + 1], i + 1 == n && n >= 2);
    }
    qual.push(')');
    Ok(SplitKey {
        row_key: row.into_bytes(),
        qualifier: qual.into_bytes(),
    })
}

/// Split on commas that are not escaped.
fn split_fields(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == ',' {
            out.push(&s[start..i]);
            start = i + 1;
        }
    }
    out.push(&s[start..]);
    out
}

/// Inverse of [`split_path`].
pub fn decode_key(row_key: &[u8], qualifier: &[u8]) -> Result<PathString, KeyError> {
    let row = std::str::from_utf8(row_key).map_err(|_| KeyError::Malformed("row key is not UTF-8".into()))?;
    let qual = std::str::from_utf8(qualifier)
        .map_err(|_| KeyError::Malformed("qualifier is not UTF-8".into()))?;
    let row = row
        .strip_prefix('(')
        .ok_or_else(|| KeyError::Malformed(format!("row key must start with '(': {row}")))?;
    let inner = qual
        .strip_suffix(')')
        .ok_or_else(|| KeyError::Malformed(format!("qualifier must end with ')': {qual}")))?;

    let head = split_fields(row);
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    match head.as_slice() {
        [class] => vertices.push(VertexLabel::class(decode_segment(class)?)),
        [attr, edge, class] => {
            vertices.push(VertexLabel::attr(decode_segment(attr)?));
            edges.push(decode_segment(edge)?);
            vertices.push(VertexLabel::class(decode_segment(class)?));
        }
        _ => return Err(KeyError::Malformed(format!("row key has {} fields", head.len()))),
    }

    if !inner.is_empty() {
        let rest = inner
            .strip_prefix(',')
            .ok_or_else(|| KeyError::Malformed(format!("qualifier must start with ',': {qual}")))?;
        let fields = split_fields(rest);
        if fields.len() % 2 != 0 {
            return Err(KeyError::Malformed("qualifier has an odd field count".into()));
        }
        let pairs = fields.len() / 2;
        for (k, pair) in fields.chunks(2).enumerate() {
            edges.push(decode_segment(pair[0])?);
            let last = k + 1 == pairs;
            let label = if last {
                match pair[1].strip_prefix(CLASS_MARKER) {
                    Some(c) => VertexLabel::class(decode_segment(c)?),
                    None => VertexLabel::attr(decode_segment(pair[1])?),
                }
            } else {
                VertexLabel::class(decode_segment(pair[1])?)
            };
            vertices.push(label);
        }
    }

    let path = PathString::new(vertices, edges)
        .map_err(|e| KeyError::Malformed(e.to_string()))?;
    // the marker is only meaningful on paths of length >= 2
    let again = split_path(&path)?;
    if again.row_key != row_key || again.qualifier != qualifier {
        return Err(KeyError::Malformed(format!(
            "key is not in canonical form: {}{}",
            String::from_utf8_lossy(row_key),
            String::from_utf8_lossy(qualifier)
        )));
    }
    Ok(path)
}
