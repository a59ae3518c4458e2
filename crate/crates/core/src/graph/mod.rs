//! Model-to-multigraph transformation and bag-of-paths extraction.
//!
//! Every object becomes a class vertex labeled with its class name and every
//! attribute value becomes an attribute vertex. Attribute vertices are linked
//! to their owner by a pair of edges (one per direction) labeled with the
//! attribute name; references become a single edge in their declared
//! direction.
//!
//! Paths are collected under three rules:
//! - a singleton `(C)` for every class vertex without attribute neighbors;
//! - every length-1 path `(value, attr, C)`;
//! - every simple path of length 2..=`max_path_length` whose endpoints are
//!   each an attribute vertex or a class vertex without attribute neighbors.

mod path;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::Model;

pub use path::{BagOfPaths, PathShapeError, PathString, Segment, VertexKind, VertexLabel};

pub const DEFAULT_MAX_PATH_LENGTH: usize = 4;

/// Elements to leave out of the graph, and the path length threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub excluded_classes: BTreeSet<String>,
    pub excluded_attributes: BTreeSet<String>,
    pub excluded_references: BTreeSet<String>,
    pub max_path_length: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            excluded_classes: BTreeSet::new(),
            excluded_attributes: BTreeSet::new(),
            excluded_references: BTreeSet::new(),
            max_path_length: DEFAULT_MAX_PATH_LENGTH,
        }
    }
}

impl FilterConfig {
    pub fn with_max_path_length(mut self, n: usize) -> Self {
        self.max_path_length = n;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_path_length == 0 {
            return Err("max_path_length must be at least 1".to_string());
        }
        Ok(())
    }
}

/// Where a vertex came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Origin {
    pub object_id: String,
    pub attribute: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub label: VertexLabel,
    pub origin: Origin,
}

impl Vertex {
    pub fn kind(&self) -> VertexKind {
        self.label.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Reference,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub label: String,
    pub kind: EdgeKind,
}

/// Labeled directed multigraph built from one model.
#[derive(Debug, Clone, Default)]
pub struct ModelGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
}

impl ModelGraph {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Indices of the edges leaving vertex `v`.
    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    pub fn add_vertex(&mut self, label: VertexLabel, origin: Origin) -> usize {
        self.vertices.push(Vertex { label, origin });
        self.outgoing.push(Vec::new());
        self.vertices.len() - 1
    }

    /// Add a directed edge. Panics when an endpoint is out of range.
    pub fn add_edge(&mut self, source: usize, target: usize, label: &str, kind: EdgeKind) {
        assert!(source < self.vertices.len() && target < self.vertices.len());
        self.edges.push(Edge {
            source,
            target,
            label: label.to_string(),
            kind,
        });
        self.outgoing[source].push(self.edges.len() - 1);
    }

    /// A vertex may end a path: it is an attribute value, or a class vertex
    /// with no attribute neighbor.
    pub fn is_endpoint(&self, v: usize) -> bool {
        match self.vertices[v].kind() {
            VertexKind::Attribute => true,
            VertexKind::Class => !self.has_attribute_neighbor(v),
        }
    }

    pub fn has_attribute_neighbor(&self, v: usize) -> bool {
        self.outgoing[v]
            .iter()
            .any(|&e| self.vertices[self.edges[e].target].kind() == VertexKind::Attribute)
    }
}

/// Build the multigraph of `m`, leaving out excluded classes, attributes and
/// references.
pub fn build_graph(m: &Model, cfg: &FilterConfig) -> ModelGraph {
    let mut g = ModelGraph::default();
    let mut class_vertex: HashMap<&str, usize> = HashMap::with_capacity(m.objects.len());

    for o in &m.objects {
        if cfg.excluded_classes.contains(&o.class_name) {
            continue;
        }
        let v = g.add_vertex(
            VertexLabel::class(&o.class_name),
            Origin {
                object_id: o.id.clone(),
                attribute: None,
            },
        );
        class_vertex.insert(o.id.as_str(), v);
        for (name, values) in &o.attributes {
            if cfg.excluded_attributes.contains(name) {
                continue;
            }
            for value in values {
                let a = g.add_vertex(
                    VertexLabel::attr(value),
                    Origin {
                        object_id: o.id.clone(),
                        attribute: Some(name.clone()),
                    },
                );
                g.add_edge(v, a, name, EdgeKind::Attribute);
                g.add_edge(a, v, name, EdgeKind::Attribute);
            }
        }
    }

    for o in &m.objects {
        let Some(&src) = class_vertex.get(o.id.as_str()) else {
            continue;
        };
        for (name, targets) in &o.references {
            if cfg.excluded_references.contains(name) {
                continue;
            }
            for t in targets {
                if let Some(&dst) = class_vertex.get(t.as_str()) {
                    g.add_edge(src, dst, name, EdgeKind::Reference);
                }
            }
        }
    }
    g
}

fn path_from(g: &ModelGraph, vertices: &[usize], edges: &[usize]) -> PathString {
    PathString::new(
        vertices.iter().map(|&v| g.vertices[v].label.clone()).collect(),
        edges.iter().map(|&e| g.edges[e].label.clone()).collect(),
    )
    .expect("walk has one more vertex than edges")
}

struct Walk<'g> {
    g: &'g ModelGraph,
    endpoint: Vec<bool>,
    on_path: Vec<bool>,
    vertices: Vec<usize>,
    edges: Vec<usize>,
    max_len: usize,
}

impl Walk<'_> {
    fn extend(&mut self, bag: &mut BagOfPaths) {
        let here = *self.vertices.last().expect("walk is never empty");
        if self.edges.len() >= 2 && self.endpoint[here] {
            bag.add(path_from(self.g, &self.vertices, &self.edges), 1);
        }
        if self.edges.len() == self.max_len {
            return;
        }
        for &e in self.g.outgoing(here) {
            let next = self.g.edges[e].target;
            if self.on_path[next] {
                continue;
            }
            self.on_path[next] = true;
            self.vertices.push(next);
            self.edges.push(e);
            self.extend(bag);
            self.edges.pop();
            self.vertices.pop();
            self.on_path[next] = false;
        }
    }
}

/// Extract the bag of paths of `g` under the three path rules.
pub fn extract_paths(g: &ModelGraph, cfg: &FilterConfig) -> BagOfPaths {
    let mut bag = BagOfPaths::new();
    let n = g.vertices.len();
    let endpoint: Vec<bool> = (0..n).map(|v| g.is_endpoint(v)).collect();

    for v in 0..n {
        match g.vertices[v].kind() {
            VertexKind::Class if endpoint[v] => {
                bag.add(PathString::singleton(g.vertices[v].label.clone()), 1);
            }
            VertexKind::Attribute => {
                for &e in g.outgoing(v) {
                    let t = g.edges[e].target;
                    if g.vertices[t].kind() == VertexKind::Class {
                        bag.add(path_from(g, &[v, t], &[e]), 1);
                    }
                }
            }
            _ => {}
        }
    }

    if cfg.max_path_length >= 2 {
        let mut walk = Walk {
            g,
            endpoint: endpoint.clone(),
            on_path: vec![false; n],
            vertices: Vec::with_capacity(cfg.max_path_length + 1),
            edges: Vec::with_capacity(cfg.max_path_length),
            max_len: cfg.max_path_length,
        };
        for start in (0..n).filter(|&v| endpoint[v]) {
            walk.on_path[start] = true;
            walk.vertices.push(start);
            walk.extend(&mut bag);
            walk.vertices.pop();
            walk.on_path[start] = false;
        }
    }
    bag
}

/// `build_graph` followed by `extract_paths`.
pub fn model_to_bop(m: &Model, cfg: &FilterConfig) -> BagOfPaths {
    extract_paths(&build_graph(m, cfg), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelObject;

    fn attr_path(a: &str, e: &str, c: &str) -> PathString {
        PathString::alternating(vec![VertexLabel::attr(a), VertexLabel::class(c)], [e])
    }

    #[test]
    fn state_with_name() {
        let mut m = Model::new("uml");
        m.objects.push(ModelObject::new("s", "State").with_attr("name", "Talking"));
        let g = build_graph(&m, &FilterConfig::default());
        assert_eq!(g.vertices().len(), 2);
        assert_eq!(g.edges().len(), 2);
        assert!(g.edges().iter().all(|e| e.label == "name" && e.kind == EdgeKind::Attribute));
        assert_eq!(g.edges()[0].source, g.edges()[1].target);
        assert_eq!(g.edges()[0].target, g.edges()[1].source);
    }

    #[test]
    fn empty_model_gives_empty_graph_and_bag() {
        let m = Model::new("uml");
        let g = build_graph(&m, &FilterConfig::default());
        assert!(g.vertices().is_empty() && g.edges().is_empty());
        let bag = model_to_bop(&m, &FilterConfig::default());
        assert!(bag.is_empty());
        assert_eq!(bag.total(), 0);
    }

    #[test]
    fn reference_edge_keeps_direction() {
        let mut m = Model::new("uml");
        m.objects.push(ModelObject::new("t", "Transition").with_ref("source", "s"));
        m.objects.push(ModelObject::new("s", "State"));
        let g = build_graph(&m, &FilterConfig::default());
        assert_eq!(g.edges().len(), 1);
        let e = &g.edges()[0];
        assert_eq!(e.kind, EdgeKind::Reference);
        assert_eq!(e.label, "source");
        assert_eq!(g.vertices()[e.source].label, VertexLabel::class("Transition"));
        assert_eq!(g.vertices()[e.target].label, VertexLabel::class("State"));
    }

    #[test]
    fn lone_region_is_a_singleton() {
        let mut m = Model::new("uml");
        m.objects.push(ModelObject::new("r", "Region"));
        let bag = model_to_bop(&m, &FilterConfig::default());
        let expected: BagOfPaths =
            [(PathString::singleton(VertexLabel::class("Region")), 1)].into_iter().collect();
        assert_eq!(bag, expected);
    }

    #[test]
    fn exclusions_remove_vertices_and_edges() {
        let mut m = Model::new("uml");
        m.objects.push(
            ModelObject::new("t", "Transition")
                .with_attr("name", "go")
                .with_attr("kind", "external")
                .with_ref("source", "s"),
        );
        m.objects.push(ModelObject::new("s", "State"));
        let cfg = FilterConfig {
            excluded_attributes: ["kind".to_string()].into(),
            excluded_references: ["source".to_string()].into(),
            ..Default::default()
        };
        let g = build_graph(&m, &cfg);
        assert_eq!(g.vertices().len(), 3);
        assert_eq!(g.edges().len(), 2);

        let cfg = FilterConfig {
            excluded_classes: ["State".to_string()].into(),
            ..Default::default()
        };
        let g = build_graph(&m, &cfg);
        assert!(g.edges().iter().all(|e| e.kind == EdgeKind::Attribute));
    }

    #[test]
    fn same_object_attribute_pair_is_included() {
        let mut m = Model::new("uml");
        m.objects.push(
            ModelObject::new("t", "Transition")
                .with_attr("name", "go")
                .with_attr("kind", "external"),
        );
        let bag = model_to_bop(&m, &FilterConfig::default());
        let p = PathString::alternating(
            vec![VertexLabel::attr("go"), VertexLabel::class("Transition"), VertexLabel::attr("external")],
            ["name", "kind"],
        );
        assert_eq!(bag.count(&p), 1);
        assert_eq!(bag.count(&attr_path("go", "name", "Transition")), 1);
        // two length-1 paths + two length-2 paths
        assert_eq!(bag.total(), 4);
    }

    #[test]
    fn repeated_values_accumulate() {
        let mut m = Model::new("x");
        m.objects.push(ModelObject::new("o", "C").with_attr("tag", "a").with_attr("tag", "a"));
        let bag = model_to_bop(&m, &FilterConfig::default());
        assert_eq!(bag.count(&attr_path("a", "tag", "C")), 2);
        let pair = PathString::alternating(
            vec![VertexLabel::attr("a"), VertexLabel::class("C"), VertexLabel::attr("a")],
            ["tag", "tag"],
        );
        assert_eq!(bag.count(&pair), 2);
    }

    #[test]
    fn max_length_one_keeps_only_short_paths() {
        let mut m = Model::new("x");
        m.objects.push(ModelObject::new("a", "A").with_attr("name", "x").with_ref("r", "b"));
        m.objects.push(ModelObject::new("b", "B").with_attr("name", "y"));
        let bag = model_to_bop(&m, &FilterConfig::default().with_max_path_length(1));
        assert!(bag.paths().all(|p| p.len() <= 1));
        assert_eq!(bag.total(), 2);
    }
}
