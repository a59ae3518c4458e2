#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pathmark_core::graph::{BagOfPaths, FilterConfig, ModelGraph, PathString, VertexKind};
use pathmark_core::model::Model;
use pathmark_core::normalize::{compute_stop_paths, filter_stop_paths, StopPathSet};
use pathmark_core::pipeline::Pipeline;

/// Every path of `g` under the extraction rules, found by trying every
/// sequence of up to `max_len` edges.
pub fn enumerate_paths(g: &ModelGraph, max_len: usize) -> BagOfPaths {
    let vs = g.vertices();
    let es = g.edges();
    let is_attr = |v: usize| vs[v].label.kind == VertexKind::Attribute;
    let has_attr_neighbor = |v: usize| {
        es.iter()
            .any(|e| (e.source == v && is_attr(e.target)) || (e.target == v && is_attr(e.source)))
    };
    let endpoint = |v: usize| is_attr(v) || !has_attr_neighbor(v);

    let mut bag = BagOfPaths::new();
    for v in 0..vs.len() {
        if !is_attr(v) && endpoint(v) {
            bag.add(PathString::singleton(vs[v].label.clone()), 1);
        }
    }
    for e in es {
        if is_attr(e.source) && !is_attr(e.target) {
            bag.add(
                PathString::new(vec![vs[e.source].label.clone(), vs[e.target].label.clone()], vec![e.label.clone()])
                    .unwrap(),
                1,
            );
        }
    }
    let mut seq: Vec<usize> = Vec::new();
    fn rec(
        g: &ModelGraph,
        seq: &mut Vec<usize>,
        max_len: usize,
        endpoint: &dyn Fn(usize) -> bool,
        bag: &mut BagOfPaths,
    ) {
        let es = g.edges();
        if seq.len() >= 2 {
            let mut verts = vec![es[seq[0]].source];
            verts.extend(seq.iter().map(|&e| es[e].target));
            let distinct: BTreeSet<usize> = verts.iter().copied().collect();
            let joined = seq.windows(2).all(|w| es[w[0]].target == es[w[1]].source);
            if joined && distinct.len() == verts.len() && endpoint(verts[0]) && endpoint(*verts.last().unwrap()) {
                bag.add(
                    PathString::new(
                        verts.iter().map(|&v| g.vertices()[v].label.clone()).collect(),
                        seq.iter().map(|&e| es[e].label.clone()).collect(),
                    )
                    .unwrap(),
                    1,
                );
            }
        }
        if seq.len() == max_len {
            return;
        }
        for e in 0..es.len() {
            seq.push(e);
            rec(g, seq, max_len, endpoint, bag);
            seq.pop();
        }
    }
    if max_len >= 2 {
        rec(g, &mut seq, max_len, &endpoint, &mut bag);
    }
    bag
}

/// Normalized bags, the stop-path set and the filtered bags of a corpus,
/// computed without the index.
pub struct OracleCorpus {
    pub raw: Vec<(String, BagOfPaths)>,
    pub stop: StopPathSet,
    pub filtered: Vec<(String, BagOfPaths)>,
}

pub fn oracle_corpus(models: &[(String, Model)], pipeline: &Pipeline, threshold: f64) -> OracleCorpus {
    let raw: Vec<(String, BagOfPaths)> = models.iter().map(|(id, m)| (id.clone(), pipeline.encode(m))).collect();
    let mut df: BTreeMap<PathString, u64> = BTreeMap::new();
    for (_, b) in &raw {
        for p in b.paths() {
            *df.entry(p.clone()).or_default() += 1;
        }
    }
    let stop = compute_stop_paths(&df, raw.len() as u64, threshold).unwrap();
    let filtered = raw.iter().map(|(id, b)| (id.clone(), filter_stop_paths(b, &stop))).collect();
    OracleCorpus { raw, stop, filtered }
}

/// Direct BM25 evaluation with b = 0.75, z = 0.1, summing in query order.
pub fn naive_scores(query: &BagOfPaths, corpus: &[(String, BagOfPaths)]) -> BTreeMap<String, f64> {
    let (b, z) = (0.75, 0.1);
    let t = corpus.len() as f64;
    let avdl = corpus.iter().map(|(_, m)| m.total() as f64).sum::<f64>() / t;
    let mut dfs: BTreeMap<&PathString, f64> = BTreeMap::new();
    for (_, m) in corpus {
        for p in m.paths() {
            *dfs.entry(p).or_default() += 1.0;
        }
    }
    let mut out = BTreeMap::new();
    for (id, m) in corpus {
        let mut s = 0.0;
        for (p, &cq) in query.iter() {
            let cm = m.count(p) as f64;
            if cm == 0.0 {
                continue;
            }
            let df = dfs[p];
            let len = m.total() as f64;
            s += cq as f64 * (z + 1.0) * cm / (cm + z * (1.0 - b + b * len / avdl)) * ((t + 1.0) / df).ln();
        }
        if s > 0.0 {
            out.insert(id.clone(), s);
        }
    }
    out
}

/// Expected postings: path -> model -> (count, total) over filtered bags.
pub fn expected_postings(filtered: &[(String, BagOfPaths)]) -> BTreeMap<PathString, BTreeMap<String, (u64, u64)>> {
    let mut out: BTreeMap<PathString, BTreeMap<String, (u64, u64)>> = BTreeMap::new();
    for (id, b) in filtered {
        for (p, &c) in b.iter() {
            out.entry(p.clone()).or_default().insert(id.clone(), (c, b.total()));
        }
    }
    out
}

pub fn default_filter() -> FilterConfig {
    FilterConfig::default()
}
