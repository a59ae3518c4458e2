use std::collections::btree_map;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Whether a vertex stands for an attribute value or for an object's class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Attribute,
    Class,
}

/// A vertex label tagged with its kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexLabel {
    pub kind: VertexKind,
    pub text: String,
}

impl VertexLabel {
    pub fn attr(text: impl Into<String>) -> Self {
        VertexLabel {
            kind: VertexKind::Attribute,
            text: text.into(),
        }
    }

    pub fn class(text: impl Into<String>) -> Self {
        VertexLabel {
            kind: VertexKind::Class,
            text: text.into(),
        }
    }

    pub fn is_attribute(&self) -> bool {
        self.kind == VertexKind::Attribute
    }
}

/// One element of a path, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment<'a> {
    Vertex(&'a VertexLabel),
    Edge(&'a str),
}

/// A path of alternating vertex and edge labels that starts and ends with a
/// vertex. The length of a path is its number of edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathString {
    vertices: Vec<VertexLabel>,
    edges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("a path needs one more vertex than edges (got {vertices} vertices, {edges} edges)")]
pub struct PathShapeError {
    pub vertices: usize,
    pub edges: usize,
}

impl PathString {
    pub fn new(vertices: Vec<VertexLabel>, edges: Vec<String>) -> Result<Self, PathShapeError> {
        if vertices.len() != edges.len() + 1 {
            return Err(PathShapeError {
                vertices: vertices.len(),
                edges: edges.len(),
            });
        }
        Ok(PathString { vertices, edges })
    }

    pub fn singleton(v: VertexLabel) -> Self {
        PathString {
            vertices: vec![v],
            edges: Vec::new(),
        }
    }

    /// Build from alternating `vertex, edge, vertex, ...` parts.
    ///
    /// ```
    /// use pathmark_core::graph::{PathString, VertexLabel};
    /// let p = PathString::alternating(
    ///     vec![VertexLabel::attr("wait"), VertexLabel::class("State")],
    ///     ["name"],
    /// );
    /// assert_eq!(p.to_string(), "(wait,name,State)");
    /// ```
    pub fn alternating<E: Into<String>>(
        vertices: impl IntoIterator<Item = VertexLabel>,
        edges: impl IntoIterator<Item = E>,
    ) -> Self {
        let vertices: Vec<VertexLabel> = vertices.into_iter().collect();
        let edges: Vec<String> = edges.into_iter().map(Into::into).collect();
        PathString::new(vertices, edges).expect("alternating path shape")
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    /// Singleton paths have length zero but are never empty.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> &[VertexLabel] {
        &self.vertices
    }

    pub fn edges(&self) -> &[String] {
        &self.edges
    }

    pub fn first(&self) -> &VertexLabel {
        &self.vertices[0]
    }

    pub fn last(&self) -> &VertexLabel {
        self.vertices.last().expect("paths have at least one vertex")
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> {
        let n = self.vertices.len() + self.edges.len();
        (0..n).map(move |i| {
            if i % 2 == 0 {
                Segment::Vertex(&self.vertices[i / 2])
            } else {
                Segment::Edge(&self.edges[i / 2])
            }
        })
    }

    pub(crate) fn vertices_mut(&mut self) -> &mut [VertexLabel] {
        &mut self.vertices
    }
}

/// Human-readable rendering: `(a,e,b)`. Not the storage encoding.
impl fmt::Display for PathString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, seg) in self.segments().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match seg {
                Segment::Vertex(v) => f.write_str(&v.text)?,
                Segment::Edge(e) => f.write_str(e)?,
            }
        }
        f.write_str(")")
    }
}

/// A multiset of paths with its total size.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BagOfPaths {
    counts: BTreeMap<PathString, u64>,
    total: u64,
    #[serde(default)]
    normalized: bool,
}

/// Bags compare as multisets; the normalization marker is ignored.
impl PartialEq for BagOfPaths {
    fn eq(&self, other: &Self) -> bool {
        self.total == other.total && self.counts == other.counts
    }
}

impl Eq for BagOfPaths {}

impl BagOfPaths {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `n` occurrences of `path`. Adding zero is a no-op.
    pub fn add(&mut self, path: PathString, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(path).or_insert(0) += n;
        self.total += n;
    }

    /// Remove every occurrence of `path`, returning how many there were.
    pub fn remove(&mut self, path: &PathString) -> u64 {
        let n = self.counts.remove(path).unwrap_or(0);
        self.total -= n;
        n
    }

    pub fn count(&self, path: &PathString) -> u64 {
        self.counts.get(path).copied().unwrap_or(0)
    }

    pub fn contains(&self, path: &PathString) -> bool {
        self.counts.contains_key(path)
    }

    /// |BoP|: the sum of all counts.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct paths.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> btree_map::Iter<'_, PathString, u64> {
        self.counts.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathString> {
        self.counts.keys()
    }

    /// True once the bag went through word normalization.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn mark_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }
}

impl FromIterator<(PathString, u64)> for BagOfPaths {
    fn from_iter<T: IntoIterator<Item = (PathString, u64)>>(iter: T) -> Self {
        let mut bag = BagOfPaths::new();
        for (p, n) in iter {
            bag.add(p, n);
        }
        bag
    }
}

impl<'a> IntoIterator for &'a BagOfPaths {
    type Item = (&'a PathString, &'a u64);
    type IntoIter = btree_map::Iter<'a, PathString, u64>;

    fn into_iter(self) -> Self::IntoIter {
        self.counts.iter()
    }
}
