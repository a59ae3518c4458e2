//! Word-level normalization of attribute values inside paths, and corpus-level
//! stop-path removal.
//!
//! Each attribute-vertex label is tokenized, stripped of stop words and
//! stemmed. A label that yields no token removes every path it occurs in; a
//! label that yields several tokens replicates its paths once per token.

mod porter;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BagOfPaths, PathString, VertexKind};

pub use porter::stem;
pub use tokenize::{tokenize, Splitter};

/// Replicas produced from one source path are capped at this many.
pub const MAX_REPLICAS_PER_PATH: usize = 64;

pub const DEFAULT_STOPWORD_LIST: &str = "english-v1";

pub const DEFAULT_STOP_PATH_THRESHOLD: f64 = 0.70;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub split_camel_case: bool,
    pub splitter: Splitter,
    pub stopword_list_id: String,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            split_camel_case: true,
            splitter: Splitter::WhitespacePunctuation,
            stopword_list_id: DEFAULT_STOPWORD_LIST.to_string(),
        }
    }
}

impl TokenizerConfig {
    /// Whitespace-only splitting without camel-case splitting.
    pub fn whitespace_only() -> Self {
        TokenizerConfig {
            split_camel_case: false,
            splitter: Splitter::Whitespace,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("unknown stop-word list '{0}'")]
    UnknownStopWordList(String),
    #[error("stop-path threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
}

/// A named list of stop words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWordList {
    pub id: String,
    words: HashSet<String>,
}

impl StopWordList {
    /// Parse the stop-word file format: one lowercase word per line, `#`
    /// starts a comment.
    pub fn parse(id: impl Into<String>, text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect();
        StopWordList {
            id: id.into(),
            words,
        }
    }

    /// Look up one of the lists shipped with the engine.
    pub fn builtin(id: &str) -> Result<Arc<StopWordList>, NormalizeError> {
        static ENGLISH_V1: OnceLock<Arc<StopWordList>> = OnceLock::new();
        match id {
            DEFAULT_STOPWORD_LIST => Ok(ENGLISH_V1
                .get_or_init(|| {
                    Arc::new(StopWordList::parse(DEFAULT_STOPWORD_LIST, include_str!("english-v1.txt")))
                })
                .clone()),
            other => Err(NormalizeError::UnknownStopWordList(other.to_string())),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Order-preserving removal of stop words.
pub fn remove_stopwords(tokens: Vec<String>, list: &StopWordList) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|t| !list.contains(&t.to_lowercase()))
        .collect()
}

/// The word-normalization pipeline for one tokenizer configuration.
#[derive(Debug, Clone)]
pub struct Normalizer {
    cfg: TokenizerConfig,
    stopwords: Arc<StopWordList>,
}

impl Normalizer {
    pub fn new(cfg: TokenizerConfig) -> Result<Self, NormalizeError> {
        let stopwords = StopWordList::builtin(&cfg.stopword_list_id)?;
        Ok(Normalizer { cfg, stopwords })
    }

    pub fn with_stopwords(cfg: TokenizerConfig, stopwords: Arc<StopWordList>) -> Self {
        Normalizer { cfg, stopwords }
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.cfg
    }

    /// tokenize, drop stop words, stem
    pub fn normalize_value(&self, value: &str) -> Vec<String> {
        remove_stopwords(tokenize(value, &self.cfg), &self.stopwords)
            .into_iter()
            .map(|t| stem(&t))
            .collect()
    }

    /// Normalize every attribute label of every path in `bop`.
    ///
    /// Bags that already went through this step are returned unchanged: the
    /// stemmer is not idempotent on its own output, so re-normalizing tokens
    /// would drift.
    pub fn normalize_bop(&self, bop: &BagOfPaths) -> BagOfPaths {
        if bop.is_normalized() {
            return bop.clone();
        }
        let mut out = BagOfPaths::new();
        for (path, &count) in bop {
            for replica in self.replicate(path) {
                out.add(replica, count);
            }
        }
        out.mark_normalized()
    }

    fn replicate(&self, path: &PathString) -> Vec<PathString> {
        let attr_positions: Vec<usize> = path
            .vertices()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VertexKind::Attribute)
            .map(|(i, _)| i)
            .collect();
        if attr_positions.is_empty() {
            return vec![path.clone()];
        }
        let mut token_lists: Vec<Vec<String>> = attr_positions
            .iter()
            .map(|&i| self.normalize_value(&path.vertices()[i].text))
            .collect();
        if token_lists.iter().any(Vec::is_empty) {
            return Vec::new();
        }
        cap_replicas(&mut token_lists, MAX_REPLICAS_PER_PATH);

        let mut out = vec![path.clone()];
        for (slot, tokens) in attr_positions.iter().zip(&token_lists) {
            let mut next = Vec::with_capacity(out.len() * tokens.len());
            for p in &out {
                for t in tokens {
                    let mut q = p.clone();
                    q.vertices_mut()[*slot].text.clone_from(t);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }
}

/// Drop trailing tokens from the longest list (first on ties) until the
/// cartesian product fits in `cap`.
fn cap_replicas(lists: &mut [Vec<String>], cap: usize) {
    loop {
        let product = lists.iter().fold(1usize, |acc, l| acc.saturating_mul(l.len()));
        if product <= cap {
            return;
        }
        let longest = lists
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.len().cmp(&b.len()).then(j.cmp(i)))
            .map(|(i, _)| i)
            .expect("non-empty");
        lists[longest].pop();
    }
}

/// Paths considered non-discriminative for one corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StopPathSet {
    pub paths: BTreeSet<PathString>,
    pub threshold: f64,
    pub corpus_size_at_computation: u64,
}

impl StopPathSet {
    pub fn empty() -> Self {
        StopPathSet {
            paths: BTreeSet::new(),
            threshold: DEFAULT_STOP_PATH_THRESHOLD,
            corpus_size_at_computation: 0,
        }
    }

    pub fn contains(&self, p: &PathString) -> bool {
        self.paths.contains(p)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Smallest document frequency that makes a path a stop path.
pub fn min_stop_df(corpus_size: u64, threshold: f64) -> u64 {
    // the epsilon keeps 0.7 * 10 at exactly 7
    ((threshold * corpus_size as f64) - 1e-9).ceil().max(1.0) as u64
}

/// `{p : df(p) >= threshold * corpus_size}`; empty for an empty corpus.
pub fn compute_stop_paths(
    df: &BTreeMap<PathString, u64>,
    corpus_size: u64,
    threshold: f64,
) -> Result<StopPathSet, NormalizeError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(NormalizeError::BadThreshold(threshold));
    }
    let mut set = StopPathSet {
        paths: BTreeSet::new(),
        threshold,
        corpus_size_at_computation: corpus_size,
    };
    if corpus_size == 0 {
        return Ok(set);
    }
    let min_df = min_stop_df(corpus_size, threshold);
    set.paths = df
        .iter()
        .filter(|(_, &d)| d >= min_df)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(set)
}

/// Multiset difference: every stop path is removed with all its occurrences.
pub fn filter_stop_paths(bop: &BagOfPaths, sps: &StopPathSet) -> BagOfPaths {
    let mut out = bop.clone();
    for p in &sps.paths {
        out.remove(p);
    }
    out
}
