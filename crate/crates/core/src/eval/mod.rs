//! Evaluation harness: mutation-derived known-item queries, mean reciprocal
//! rank, a name-only BM25 baseline and latency measurements.

mod bench;
mod cluster;
mod mutate;
mod text;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{parse_model_json, to_json_pretty, Model, ModelError};
use crate::scorer::ScoredResult;

pub use bench::{bucket_of, LatencyRow, PhaseStat, QueryBucket, benchmark_latency, write_latency_csv};
pub use cluster::{cluster_names, name_tokens, ClusterError};
pub use mutate::{
    check_mutant, choose_root, element_counts, mutate, mutate_corpus, MutationConfig, MutationContext,
    MutationError, OperatorStep, QueryMutant, MIN_CLASSES, MIN_ELEMENTS, RENAMED_PACKAGE,
};
pub use text::{TextIndex, TextParams};

pub const MUTANTS_FILE: &str = "mutants.json";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Cluster(#[from] ClusterError),
    #[error("search failed: {0}")]
    Search(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Rank counts for the 1st to 4th positions and everything below.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub first: u64,
    pub second: u64,
    pub third: u64,
    pub fourth: u64,
    /// rank 5 or worse, including origins missing from the results
    pub fifth_or_more: u64,
}

impl RankHistogram {
    pub fn total(&self) -> u64 {
        self.first + self.second + self.third + self.fourth + self.fifth_or_more
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRank {
    pub origin: String,
    /// 1-based; `None` when the origin was not returned
    pub rank: Option<usize>,
}

impl QueryRank {
    pub fn reciprocal(&self) -> f64 {
        self.rank.map_or(0.0, |r| 1.0 / r as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub engine: String,
    pub query_set: String,
    /// hash of the indexed corpus, shared by reports that are compared
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_hash: Option<String>,
    pub queries: u64,
    pub mrr: f64,
    pub histogram: RankHistogram,
    pub not_found: u64,
    pub ranks: Vec<QueryRank>,
}

impl EvalReport {
    pub fn from_ranks(engine: &str, query_set: &str, ranks: Vec<QueryRank>) -> Self {
        let mut h = RankHistogram::default();
        let mut not_found = 0;
        for r in &ranks {
            match r.rank {
                Some(1) => h.first += 1,
                Some(2) => h.second += 1,
                Some(3) => h.third += 1,
                Some(4) => h.fourth += 1,
                Some(_) => h.fifth_or_more += 1,
                None => {
                    h.fifth_or_more += 1;
                    not_found += 1;
                }
            }
        }
        let mrr = if ranks.is_empty() {
            0.0
        } else {
            ranks.iter().map(QueryRank::reciprocal).sum::<f64>() / ranks.len() as f64
        };
        EvalReport {
            engine: engine.to_string(),
            query_set: query_set.to_string(),
            corpus_hash: None,
            queries: ranks.len() as u64,
            mrr,
            histogram: h,
            not_found,
            ranks,
        }
    }

    pub fn with_corpus_hash(mut self, hash: impl Into<String>) -> Self {
        self.corpus_hash = Some(hash.into());
        self
    }

    /// One row per query: index, origin, rank (empty when absent), reciprocal.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["query", "origin", "rank", "reciprocal_rank"])?;
        for (i, r) in self.ranks.iter().enumerate() {
            out.write_record([
                i.to_string(),
                r.origin.clone(),
                r.rank.map(|x| x.to_string()).unwrap_or_default(),
                r.reciprocal().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Run every mutant through `engine` and locate its origin in the results.
/// Queries run in parallel; ranks keep the mutant order.
pub fn evaluate_mrr<F>(mutants: &[QueryMutant], engine: F, engine_id: &str, query_set: &str) -> Result<EvalReport, EvalError>
where
    F: Fn(&Model) -> Result<Vec<ScoredResult>, EvalError> + Sync,
{
    let ranks: Vec<QueryRank> = mutants
        .par_iter()
        .map(|m| {
            let results = engine(&m.query)?;
            Ok(QueryRank {
                origin: m.origin.clone(),
                rank: results.iter().position(|r| r.model_id == m.origin).map(|p| p + 1),
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport::from_ranks(engine_id, query_set, ranks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MutantRecord {
    file: String,
    origin: String,
    radius: Option<usize>,
    seed: u64,
    log: Vec<OperatorStep>,
}

/// Write each mutant as a JSON model plus a `mutants.json` index.
pub fn write_mutants(dir: &Path, mutants: &[QueryMutant]) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut records = Vec::with_capacity(mutants.len());
    for (i, m) in mutants.iter().enumerate() {
        let file = format!("q{i:04}.json");
        let path = dir.join(&file);
        fs::write(&path, to_json_pretty(&m.query)).map_err(io_err(&path))?;
        records.push(MutantRecord {
            file,
            origin: m.origin.clone(),
            radius: m.radius,
            seed: m.seed,
            log: m.log.clone(),
        });
    }
    let path = dir.join(MUTANTS_FILE);
    let json = serde_json::to_string_pretty(&records).expect("records serialize");
    fs::write(&path, json).map_err(io_err(&path))
}

pub fn read_mutants(dir: &Path) -> Result<Vec<QueryMutant>, EvalError> {
    let path = dir.join(MUTANTS_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let records: Vec<MutantRecord> = serde_json::from_slice(&bytes).map_err(|e| EvalError::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    records
        .into_iter()
        .map(|r| {
            let p = dir.join(&r.file);
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            Ok(QueryMutant {
                query: parse_model_json(&bytes)?,
                origin: r.origin,
                log: r.log,
                radius: r.radius,
                seed: r.seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelObject;

    fn mutant(origin: &str) -> QueryMutant {
        let mut m = Model::new("t");
        m.objects.push(ModelObject::new("a", "C").with_attr("name", origin));
        QueryMutant {
            query: m,
            origin: origin.to_string(),
            log: Vec::new(),
            radius: Some(5),
            seed: 1,
        }
    }

    fn result(id: &str) -> ScoredResult {
        ScoredResult {
            model_id: id.to_string(),
            score: 1.0,
            matched_paths: None,
        }
    }

    #[test]
    fn perfect_and_empty_engines() {
        let qs: Vec<QueryMutant> = ["a", "b", "c"].iter().map(|o| mutant(o)).collect();
        let r = evaluate_mrr(&qs, |q| Ok(vec![result(q.objects[0].name().unwrap())]), "p", "s").unwrap();
        assert_eq!(r.mrr, 1.0);
        assert_eq!(r.histogram.first, 3);
        let r = evaluate_mrr(&qs, |_| Ok(Vec::new()), "e", "s").unwrap();
        assert_eq!(r.mrr, 0.0);
        assert_eq!(r.not_found, 3);
        assert_eq!(r.histogram.total(), 3);
    }

    #[test]
    fn ranks_one_one_two_four() {
        let ranks = [1, 1, 2, 4]
            .iter()
            .map(|&r| QueryRank {
                origin: "x".into(),
                rank: Some(r),
            })
            .collect();
        let r = EvalReport::from_ranks("e", "s", ranks);
        assert!((r.mrr - 0.6875).abs() < 1e-15);
        assert_eq!(r.histogram.total(), 4);
        assert_eq!(r.histogram.fourth, 1);
    }

    #[test]
    fn mutants_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let qs = vec![mutant("a"), mutant("b")];
        write_mutants(dir.path(), &qs).unwrap();
        assert_eq!(read_mutants(dir.path()).unwrap(), qs);
    }

    #[test]
    fn csv_has_one_row_per_query() {
        let r = EvalReport::from_ranks(
            "e",
            "s",
            vec![
                QueryRank { origin: "a".into(), rank: Some(2) },
                QueryRank { origin: "b".into(), rank: None },
            ],
        );
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("a,2,0.5"));
        assert!(text.contains("b,,0"));
    }
}
