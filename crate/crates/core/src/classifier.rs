//! Weighted k-nearest-neighbor classification over search results: the top
//! `k` models vote for their label with their score.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::BagOfPaths;
use crate::index::Index;
use crate::model::Model;
use crate::scorer::{EngineSearcher, ScoreError, ScoredResult, Searcher, ScoringParams};

pub const DEFAULT_TRAIN_RATIO: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("no scoreable neighbor: the model shares no path with the labeled corpus")]
    Unclassifiable,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("labels file: {0}")]
    Labels(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Model id to domain label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub labels: BTreeMap<String, String>,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_set(&self) -> BTreeSet<&str> {
        self.labels.values().map(String::as_str).collect()
    }

    /// Parse a `model_id,label` CSV with a header row.
    pub fn from_csv<R: io::Read>(reader: R) -> Result<Self, ClassifyError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| ClassifyError::Labels(e.to_string()))?.clone();
        if headers.len() != 2 {
            return Err(ClassifyError::Labels(format!(
                "expected header 'model_id,label', got {} columns",
                headers.len()
            )));
        }
        let mut labels = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ClassifyError::Labels(e.to_string()))?;
            let (id, label) = (rec[0].trim(), rec[1].trim());
            if id.is_empty() || label.is_empty() {
                return Err(ClassifyError::Labels(format!("line {}: empty id or label", i + 2)));
            }
            if labels.insert(id.to_string(), label.to_string()).is_some() {
                return Err(ClassifyError::Labels(format!("line {}: duplicate id '{id}'", i + 2)));
            }
        }
        Ok(LabeledCorpus { labels })
    }

    pub fn from_csv_file(path: &Path) -> Result<Self, ClassifyError> {
        let f = std::fs::File::open(path)
            .map_err(|e| ClassifyError::Labels(format!("{}: {e}", path.display())))?;
        Self::from_csv(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub score: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub label: String,
    /// summed neighbor scores per label
    pub weights: BTreeMap<String, f64>,
    pub k: usize,
    pub neighbors: Vec<Neighbor>,
}

/// Vote among the first `k` labeled results, skipping `exclude` and ids
/// outside `corpus`.
pub fn vote(
    results: &[ScoredResult],
    corpus: &LabeledCorpus,
    k: usize,
    exclude: Option<&str>,
) -> Result<ClassificationResult, ClassifyError> {
    if k == 0 {
        return Err(ClassifyError::Invalid("k must be at least 1".into()));
    }
    let neighbors: Vec<Neighbor> = results
        .iter()
        .filter(|r| Some(r.model_id.as_str()) != exclude && r.score > 0.0)
        .filter_map(|r| {
            corpus.labels.get(&r.model_id).map(|l| Neighbor {
                id: r.model_id.clone(),
                score: r.score,
                label: l.clone(),
            })
        })
        .take(k)
        .collect();
    if neighbors.is_empty() {
        return Err(ClassifyError::Unclassifiable);
    }
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for n in &neighbors {
        *weights.entry(n.label.clone()).or_insert(0.0) += n.score;
        let b = best.entry(n.label.as_str()).or_insert(f64::MIN);
        *b = b.max(n.score);
    }
    let top = weights.values().copied().fold(f64::MIN, f64::max);
    // ties: the label whose best neighbor scores highest, then by name
    let label = weights
        .iter()
        .filter(|(_, &w)| w == top)
        .map(|(l, _)| l)
        .max_by(|a, b| best[a.as_str()].total_cmp(&best[b.as_str()]).then_with(|| b.cmp(a)))
        .expect("at least one neighbor")
        .clone();
    Ok(ClassificationResult {
        label,
        weights,
        k,
        neighbors,
    })
}

/// Classify a normalized bag with any searcher.
pub fn classify_bop(
    searcher: &dyn Searcher,
    bop: &BagOfPaths,
    corpus: &LabeledCorpus,
    k: usize,
    exclude: Option<&str>,
) -> Result<ClassificationResult, ClassifyError> {
    let results = searcher.search(bop, usize::MAX)?;
    vote(&results, corpus, k, exclude)
}

/// Classify `m` against the labeled models of its type. If `m` is itself
/// indexed under `self_id`, it is left out of its neighbors.
pub fn classify(
    index: &Index,
    m: &Model,
    corpus: &LabeledCorpus,
    k: usize,
    params: &ScoringParams,
    self_id: Option<&str>,
) -> Result<ClassificationResult, ClassifyError> {
    let searcher = EngineSearcher {
        table: index.table(&m.model_type).map_err(ScoreError::from)?,
        params: *params,
    };
    classify_bop(&searcher, &index.pipeline().encode(m), corpus, k, self_id)
}

/// Assign every id to one of `folds` folds, label by label, after a seeded
/// shuffle; fold sizes differ by at most one.
pub fn stratified_folds(corpus: &LabeledCorpus, folds: usize, seed: u64) -> Vec<Vec<String>> {
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, label) in &corpus.labels {
        by_label.entry(label).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for ids in by_label.values_mut() {
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            out[next % folds].push(id.to_string());
            next += 1;
        }
    }
    out
}

/// Stratified split into (train, test) with `ratio` of each label in train.
pub fn train_test_split(corpus: &LabeledCorpus, ratio: f64, seed: u64) -> (LabeledCorpus, LabeledCorpus) {
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, label) in &corpus.labels {
        by_label.entry(label).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (LabeledCorpus::default(), LabeledCorpus::default());
    for (label, ids) in by_label.iter_mut() {
        ids.shuffle(&mut rng);
        let cut = (ids.len() as f64 * ratio).round() as usize;
        for (i, id) in ids.iter().enumerate() {
            let side = if i < cut { &mut train } else { &mut test };
            side.labels.insert(id.to_string(), label.to_string());
        }
    }
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub mean_accuracy: f64,
    /// mean validation accuracy of every k tried
    pub per_k: Vec<(usize, f64)>,
    pub folds: usize,
    pub seed: u64,
}

/// Cross-validated choice of k. Each validation model is classified using
/// only the models of the other folds as neighbors. Ties go to the
/// smallest k.
pub fn select_k(
    searcher: &(dyn Searcher + Sync),
    bops: &BTreeMap<String, BagOfPaths>,
    corpus: &LabeledCorpus,
    k_range: std::ops::RangeInclusive<usize>,
    folds: usize,
    seed: u64,
) -> Result<KSelection, ClassifyError> {
    let ks: Vec<usize> = k_range.collect();
    if ks.is_empty() || ks[0] == 0 {
        return Err(ClassifyError::Invalid("k range must be non-empty and start at 1 or more".into()));
    }
    if folds < 2 || corpus.len() < folds {
        return Err(ClassifyError::Invalid(format!(
            "corpus of {} models is too small for {folds}-fold cross-validation",
            corpus.len()
        )));
    }
    if let Some(id) = corpus.labels.keys().find(|id| !bops.contains_key(*id)) {
        return Err(ClassifyError::Invalid(format!("no bag of paths for '{id}'")));
    }
    let split = stratified_folds(corpus, folds, seed);

    // per fold, per k: number of correct decisions
    let correct: Vec<Vec<usize>> = split
        .par_iter()
        .map(|validation| -> Result<Vec<usize>, ClassifyError> {
            let train = LabeledCorpus {
                labels: corpus
                    .labels
                    .iter()
                    .filter(|(id, _)| !validation.contains(id))
                    .map(|(a, b)| (a.clone(), b.clone()))
                    .collect(),
            };
            let mut hits = vec![0; ks.len()];
            for id in validation {
                let results = searcher.search(&bops[id], usize::MAX)?;
                for (slot, &k) in ks.iter().enumerate() {
                    match vote(&results, &train, k, Some(id)) {
                        Ok(r) if r.label == corpus.labels[id] => hits[slot] += 1,
                        Ok(_) | Err(ClassifyError::Unclassifiable) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(hits)
        })
        .collect::<Result<_, _>>()?;

    let per_k: Vec<(usize, f64)> = ks
        .iter()
        .enumerate()
        .map(|(slot, &k)| {
            let mean = split
                .iter()
                .zip(&correct)
                .map(|(v, c)| c[slot] as f64 / v.len() as f64)
                .sum::<f64>()
                / folds as f64;
            (k, mean)
        })
        .collect();
    let (k, mean_accuracy) = per_k
        .iter()
        .copied()
        .fold(None, |best: Option<(usize, f64)>, (k, acc)| match best {
            Some((_, b)) if b >= acc => best,
            _ => Some((k, acc)),
        })
        .expect("non-empty k range");
    Ok(KSelection {
        k,
        mean_accuracy,
        per_k,
        folds,
        seed,
    })
}

/// Share of `test` models whose predicted label matches, using `train` as
/// the neighbor pool.
pub fn accuracy(
    searcher: &(dyn Searcher + Sync),
    bops: &BTreeMap<String, BagOfPaths>,
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    k: usize,
) -> Result<f64, ClassifyError> {
    if test.is_empty() {
        return Err(ClassifyError::Invalid("empty test set".into()));
    }
    let hits = test
        .labels
        .par_iter()
        .map(|(id, label)| -> Result<usize, ClassifyError> {
            let bop = bops
                .get(id)
                .ok_or_else(|| ClassifyError::Invalid(format!("no bag of paths for '{id}'")))?;
            match classify_bop(searcher, bop, train, k, Some(id)) {
                Ok(r) => Ok(usize::from(&r.label == label)),
                Err(ClassifyError::Unclassifiable) => Ok(0),
                Err(e) => Err(e),
            }
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(hits as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(id: &str, score: f64) -> ScoredResult {
        ScoredResult {
            model_id: id.into(),
            score,
            matched_paths: None,
        }
    }

    fn corpus(pairs: &[(&str, &str)]) -> LabeledCorpus {
        LabeledCorpus {
            labels: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }

    #[test]
    fn weighted_majority() {
        let c = corpus(&[("a", "A"), ("b", "B")]);
        let res = vote(&[r("a", 10.0), r("b", 4.0)], &c, 2, None).unwrap();
        assert_eq!(res.label, "A");
        assert_eq!(res.weights["B"], 4.0);
    }

    #[test]
    fn k1_is_top_result() {
        let c = corpus(&[("a", "A"), ("b", "B"), ("c", "B")]);
        let res = vote(&[r("a", 5.0), r("b", 4.0), r("c", 4.0)], &c, 1, None).unwrap();
        assert_eq!(res.label, "A");
        let res = vote(&[r("a", 5.0), r("b", 4.0), r("c", 4.0)], &c, 3, None).unwrap();
        assert_eq!(res.label, "B");
    }

    #[test]
    fn ties_go_to_highest_neighbor() {
        let c = corpus(&[("a", "A"), ("b", "B"), ("c", "B"), ("x", "C")]);
        let res = vote(&[r("x", 9.0), r("a", 8.0), r("b", 4.0), r("c", 4.0)], &c, 4, None).unwrap();
        assert_eq!(res.label, "C");
        let res = vote(&[r("a", 8.0), r("b", 4.0), r("c", 4.0)], &c, 3, None).unwrap();
        assert_eq!(res.label, "A");
    }

    #[test]
    fn scaling_keeps_label() {
        let c = corpus(&[("a", "A"), ("b", "B"), ("c", "B")]);
        let rs = [r("a", 7.0), r("b", 4.0), r("c", 3.5)];
        let scaled: Vec<_> = rs.iter().map(|x| r(&x.model_id, x.score * 13.0)).collect();
        assert_eq!(vote(&rs, &c, 3, None).unwrap().label, vote(&scaled, &c, 3, None).unwrap().label);
    }

    #[test]
    fn self_and_unlabeled_skipped() {
        let c = corpus(&[("a", "A"), ("b", "B")]);
        let res = vote(&[r("a", 9.0), r("z", 8.0), r("b", 1.0)], &c, 1, Some("a")).unwrap();
        assert_eq!(res.label, "B");
        assert!(matches!(vote(&[], &c, 1, None), Err(ClassifyError::Unclassifiable)));
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let pairs: Vec<(String, String)> =
            (0..30).map(|i| (format!("m{i:02}"), ["A", "B", "C"][i % 3].to_string())).collect();
        let c = LabeledCorpus {
            labels: pairs.into_iter().collect(),
        };
        let f = stratified_folds(&c, 10, 7);
        assert!(f.iter().all(|fold| fold.len() == 3));
        for fold in &f {
            let labels: BTreeSet<&str> = fold.iter().map(|id| c.labels[id].as_str()).collect();
            assert_eq!(labels.len(), 3);
        }
        assert_eq!(f, stratified_folds(&c, 10, 7));
        assert_ne!(f, stratified_folds(&c, 10, 8));
    }

    #[test]
    fn split_ratio() {
        let c = LabeledCorpus {
            labels: (0..100).map(|i| (format!("m{i}"), (i % 2).to_string())).collect(),
        };
        let (train, test) = train_test_split(&c, DEFAULT_TRAIN_RATIO, 1);
        assert_eq!((train.len(), test.len()), (70, 30));
        assert!(train.labels.keys().all(|k| !test.labels.contains_key(k)));
    }

    #[test]
    fn labels_csv() {
        let c = LabeledCorpus::from_csv("model_id,label\na,x\nb, y \n".as_bytes()).unwrap();
        assert_eq!(c.labels["b"], "y");
        assert!(LabeledCorpus::from_csv("model_id,label\na,x\na,y\n".as_bytes()).is_err());
        assert!(LabeledCorpus::from_csv("model_id,label\na,\n".as_bytes()).is_err());
    }
}
