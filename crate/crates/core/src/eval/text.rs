use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::cluster::name_tokens;
use crate::model::Model;
use crate::normalize::Normalizer;
use crate::scorer::{sort_results, ScoredResult};

/// Okapi BM25 parameters for the name-token baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextParams {
    pub k1: f64,
    pub b: f64,
}

impl Default for TextParams {
    fn default() -> Self {
        TextParams { k1: 1.2, b: 0.75 }
    }
}

/// Inverted index over the normalized `name` values of each model.
#[derive(Debug, Clone)]
pub struct TextIndex {
    normalizer: Normalizer,
    params: TextParams,
    postings: HashMap<String, Vec<(usize, u64)>>,
    ids: Vec<String>,
    lengths: Vec<u64>,
    avgdl: f64,
}

impl TextIndex {
    pub fn build(corpus: &[(String, Model)], normalizer: Normalizer, params: TextParams) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u64)>> = HashMap::new();
        let mut lengths = Vec::with_capacity(corpus.len());
        for (doc, (_, m)) in corpus.iter().enumerate() {
            let tokens = name_tokens(m, &normalizer);
            lengths.push(tokens.len() as u64);
            let mut tf: BTreeMap<String, u64> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((doc, c));
            }
        }
        let avgdl = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<u64>() as f64 / lengths.len() as f64
        };
        TextIndex {
            normalizer,
            params,
            postings,
            ids: corpus.iter().map(|(id, _)| id.clone()).collect(),
            lengths,
            avgdl,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// ln(1 + (N - df + 0.5) / (df + 0.5))
    pub fn idf(&self, df: usize) -> f64 {
        let n = self.ids.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Rank models by BM25 over the query's name tokens; repeated query
    /// tokens count once per occurrence.
    pub fn search(&self, query: &Model, max_results: usize) -> Vec<ScoredResult> {
        let mut qtf: BTreeMap<String, u64> = BTreeMap::new();
        for t in name_tokens(query, &self.normalizer) {
            *qtf.entry(t).or_default() += 1;
        }
        let TextParams { k1, b } = self.params;
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for (t, q) in &qtf {
            let Some(list) = self.postings.get(t) else { continue };
            let idf = self.idf(list.len());
            for &(doc, tf) in list {
                let tf = tf as f64;
                let norm = k1 * (1.0 - b + b * self.lengths[doc] as f64 / self.avgdl);
                *scores.entry(doc).or_default() += *q as f64 * idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let mut out: Vec<ScoredResult> = scores
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(doc, score)| ScoredResult {
                model_id: self.ids[doc].clone(),
                score,
                matched_paths: None,
            })
            .collect();
        sort_results(&mut out);
        out.truncate(max_results);
        out
    }
}
