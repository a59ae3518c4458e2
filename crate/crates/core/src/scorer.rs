//! Okapi BM25 adapted to bags of paths.
//!
//! For a query `q` and a model `m` the score is the sum over the distinct
//! paths `w` they share of
//!
//! ```text
//! c(w,q) * (z+1) * c(w,m) / (c(w,m) + z*(1 - b + b*|m|/avdl)) * ln((t+1)/df(w))
//! ```
//!
//! [`score_query`] reads the index one row key at a time: all query paths
//! sharing a prefix are fetched with a single `get`. [`brute_force_score`]
//! evaluates the same sum directly over in-memory bags and is the reference
//! the engine is tested against. Both visit paths in key order, so their
//! floating-point sums agree exactly.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::graph::{BagOfPaths, PathString};
use crate::index::{split_path, Index, IndexError, TableReader};
use crate::model::Model;
use crate::normalize::{filter_stop_paths, StopPathSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    /// length normalization, in [0,1]
    pub b: f64,
    /// term-frequency saturation, >= 0
    pub z: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams { b: 0.75, z: 0.1 }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(0.0..=1.0).contains(&self.b) {
            return Err(ScoreError::Contract(format!("b must be in [0,1], got {}", self.b)));
        }
        if !(self.z >= 0.0 && self.z.is_finite()) {
            return Err(ScoreError::Contract(format!("z must be >= 0, got {}", self.z)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("scoring contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// One path's share of a result's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPath {
    pub path: PathString,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub model_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_paths: Option<Vec<MatchedPath>>,
}

/// One summand of the score.
pub fn bm25_term(
    c_q: u64,
    c_m: u64,
    bop_len_m: u64,
    avdl: f64,
    t: u64,
    df: u64,
    params: &ScoringParams,
) -> Result<f64, ScoreError> {
    if c_q == 0 || c_m == 0 {
        return Err(ScoreError::Contract(format!("counts must be >= 1 (c_q={c_q}, c_m={c_m})")));
    }
    if df == 0 || df > t {
        return Err(ScoreError::Contract(format!("need 1 <= df <= t (df={df}, t={t})")));
    }
    if !(avdl > 0.0 && avdl.is_finite()) {
        return Err(ScoreError::Contract(format!("avdl must be > 0, got {avdl}")));
    }
    let (b, z) = (params.b, params.z);
    let c_m = c_m as f64;
    let tf = (z + 1.0) * c_m / (c_m + z * (1.0 - b + b * bop_len_m as f64 / avdl));
    let idf = ((t as f64 + 1.0) / df as f64).ln();
    Ok(c_q as f64 * tf * idf)
}

/// Wall time spent reading postings and accumulating scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTiming {
    pub get: Duration,
    pub score: Duration,
    /// storage reads issued
    pub gets: u64,
}

#[derive(Default)]
struct Acc {
    score: f64,
    matched: Vec<MatchedPath>,
}

fn finish(acc: HashMap<String, Acc>, max_results: usize, explain: bool) -> Vec<ScoredResult> {
    let mut out: Vec<ScoredResult> = acc
        .into_iter()
        .filter(|(_, a)| a.score > 0.0)
        .map(|(id, a)| ScoredResult {
            model_id: id,
            score: a.score,
            matched_paths: explain.then_some(a.matched),
        })
        .collect();
    sort_results(&mut out);
    out.truncate(max_results);
    out
}

/// Score descending, then model id ascending.
pub fn sort_results(results: &mut [ScoredResult]) {
    results.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
}

/// Query paths grouped by row key, then qualifier.
type Grouped<'a> = BTreeMap<Vec<u8>, BTreeMap<Vec<u8>, (&'a PathString, u64)>>;

fn group(bop_q: &BagOfPaths) -> Result<Grouped<'_>, ScoreError> {
    let mut out: Grouped = BTreeMap::new();
    for (p, &c) in bop_q.iter() {
        let k = split_path(p).map_err(IndexError::from)?;
        out.entry(k.row_key).or_default().insert(k.qualifier, (p, c));
    }
    Ok(out)
}

/// Rank the models of one table against a normalized query bag.
pub fn score_query(
    table: &TableReader,
    bop_q: &BagOfPaths,
    params: &ScoringParams,
    max_results: usize,
    explain: bool,
) -> Result<Vec<ScoredResult>, ScoreError> {
    Ok(score_query_timed(table, bop_q, params, max_results, explain)?.0)
}

/// [`score_query`] plus a breakdown of where the time went.
pub fn score_query_timed(
    table: &TableReader,
    bop_q: &BagOfPaths,
    params: &ScoringParams,
    max_results: usize,
    explain: bool,
) -> Result<(Vec<ScoredResult>, ScoreTiming), ScoreError> {
    params.validate()?;
    let mut timing = ScoreTiming::default();
    let t = table.t();
    if t == 0 || bop_q.is_empty() {
        return Ok((Vec::new(), timing));
    }
    let avdl = table.avdl();
    let query = filter_stop_paths(bop_q, &*table.stop_paths()?);
    let grouped = group(&query)?;

    let mut acc: HashMap<String, Acc> = HashMap::new();
    for (row, cols) in &grouped {
        let started = Instant::now();
        let wanted: Vec<&[u8]> = cols.keys().map(Vec::as_slice).collect();
        let found = table.get_postings(row, &wanted)?;
        timing.gets += 1;
        let fetched = Instant::now();
        timing.get += fetched - started;

        for (qual, payload) in &found {
            let (path, c_q) = cols[qual];
            let df = payload.df();
            for (id, posting) in &payload.entries {
                let term = bm25_term(c_q, posting.count, posting.total, avdl, t, df, params)?;
                let a = acc.entry(id.clone()).or_default();
                a.score += term;
                if explain {
                    a.matched.push(MatchedPath {
                        path: path.clone(),
                        contribution: term,
                    });
                }
            }
        }
        timing.score += fetched.elapsed();
    }
    let started = Instant::now();
    let out = finish(acc, max_results, explain);
    timing.score += started.elapsed();
    Ok((out, timing))
}

/// Direct evaluation over every model of `corpus`; `t`, `avdl` and `df` are
/// taken from the corpus itself. Results are ordered like [`score_query`]
/// and not truncated.
pub fn brute_force_score(
    bop_q: &BagOfPaths,
    corpus: &[(String, BagOfPaths)],
    params: &ScoringParams,
) -> Result<Vec<ScoredResult>, ScoreError> {
    brute_force_explain(bop_q, corpus, params, false)
}

pub fn brute_force_explain(
    bop_q: &BagOfPaths,
    corpus: &[(String, BagOfPaths)],
    params: &ScoringParams,
    explain: bool,
) -> Result<Vec<ScoredResult>, ScoreError> {
    params.validate()?;
    let t = corpus.len() as u64;
    if t == 0 {
        return Ok(Vec::new());
    }
    let sum: u64 = corpus.iter().map(|(_, b)| b.total()).sum();
    let avdl = sum as f64 / t as f64;

    let mut acc: HashMap<String, Acc> = HashMap::new();
    for cols in group(bop_q)?.values() {
        for &(path, c_q) in cols.values() {
            let holders: Vec<&(String, BagOfPaths)> =
                corpus.iter().filter(|(_, b)| b.contains(path)).collect();
            let df = holders.len() as u64;
            for (id, bag) in holders {
                let term = bm25_term(c_q, bag.count(path), bag.total(), avdl, t, df, params)?;
                let a = acc.entry(id.clone()).or_default();
                a.score += term;
                if explain {
                    a.matched.push(MatchedPath {
                        path: path.clone(),
                        contribution: term,
                    });
                }
            }
        }
    }
    Ok(finish(acc, usize::MAX, explain))
}

/// Something that ranks models for a normalized query bag.
pub trait Searcher {
    fn search(&self, bop_q: &BagOfPaths, max_results: usize) -> Result<Vec<ScoredResult>, ScoreError>;

    /// Total number of searchable models.
    fn corpus_size(&self) -> u64;
}

/// The index-backed engine.
pub struct EngineSearcher {
    pub table: TableReader,
    pub params: ScoringParams,
}

impl Searcher for EngineSearcher {
    fn search(&self, bop_q: &BagOfPaths, max_results: usize) -> Result<Vec<ScoredResult>, ScoreError> {
        score_query(&self.table, bop_q, &self.params, max_results, false)
    }

    fn corpus_size(&self) -> u64 {
        self.table.t()
    }
}

/// Linear scan over in-memory bags, with the same stop-path handling as the
/// engine.
pub struct BruteForceSearcher {
    pub corpus: Vec<(String, BagOfPaths)>,
    pub stop_paths: StopPathSet,
    pub params: ScoringParams,
}

impl BruteForceSearcher {
    /// Copy every indexed bag of `table`.
    pub fn from_table(table: &TableReader, params: ScoringParams) -> Result<Self, IndexError> {
        Ok(BruteForceSearcher {
            corpus: table.indexed_bops()?,
            stop_paths: (*table.stop_paths()?).clone(),
            params,
        })
    }
}

impl Searcher for BruteForceSearcher {
    fn search(&self, bop_q: &BagOfPaths, max_results: usize) -> Result<Vec<ScoredResult>, ScoreError> {
        let q = filter_stop_paths(bop_q, &self.stop_paths);
        let mut out = brute_force_score(&q, &self.corpus, &self.params)?;
        out.truncate(max_results);
        Ok(out)
    }

    fn corpus_size(&self) -> u64 {
        self.corpus.len() as u64
    }
}

/// Time spent in each phase of a search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub paths: Duration,
    pub get: Duration,
    pub score: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub results: Vec<ScoredResult>,
    /// |BoP| of the query after normalization and stop-path removal
    pub query_paths: u64,
    pub timing: PhaseTiming,
}

/// Encode `query` with the index's pipeline and rank the models of its type.
pub fn search_model(
    index: &Index,
    query: &Model,
    params: &ScoringParams,
    max_results: usize,
    explain: bool,
) -> Result<SearchOutcome, ScoreError> {
    let started = Instant::now();
    let table = index.table(&query.model_type)?;
    let bop = index.pipeline().encode(query);
    let bop = filter_stop_paths(&bop, &*table.stop_paths()?);
    let paths = started.elapsed();
    let (results, t) = score_query_timed(&table, &bop, params, max_results, explain)?;
    Ok(SearchOutcome {
        results,
        query_paths: bop.total(),
        timing: PhaseTiming {
            paths,
            get: t.get,
            score: t.score,
            total: started.elapsed(),
        },
    })
}
