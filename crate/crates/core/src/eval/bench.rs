use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::index::{Index, IndexConfig};
use crate::ingest::{index_models, IngestOptions};
use crate::model::Model;
use crate::scorer::{search_model, ScoringParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryBucket {
    Small,
    Medium,
    Large,
}

impl QueryBucket {
    pub const ALL: [QueryBucket; 3] = [QueryBucket::Small, QueryBucket::Medium, QueryBucket::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryBucket::Small => "small",
            QueryBucket::Medium => "medium",
            QueryBucket::Large => "large",
        }
    }
}

/// Small below 20 objects, large above 70.
pub fn bucket_of(m: &Model) -> QueryBucket {
    match m.objects.len() {
        n if n < 20 => QueryBucket::Small,
        n if n <= 70 => QueryBucket::Medium,
        _ => QueryBucket::Large,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStat {
    pub mean_ms: f64,
    pub max_ms: f64,
}

impl PhaseStat {
    fn of(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return PhaseStat::default();
        }
        let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        PhaseStat {
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            max_ms: ms.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub index_size: u64,
    pub bucket: QueryBucket,
    pub queries: u64,
    pub paths: PhaseStat,
    pub get: PhaseStat,
    pub score: PhaseStat,
    pub total: PhaseStat,
}

/// Index `corpus` in increments up to each of `sizes` and time every query
/// against each intermediate index, one query at a time. Produces one row
/// per (size, bucket); buckets without queries have zero timings.
pub fn benchmark_latency(
    corpus: &[(String, Model)],
    sizes: &[usize],
    queries: &[Model],
    params: &ScoringParams,
    max_results: usize,
) -> Result<Vec<LatencyRow>, EvalError> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if let Some(&last) = sizes.last() {
        if last > corpus.len() {
            return Err(EvalError::Config(format!(
                "index size {last} exceeds the corpus ({} models)",
                corpus.len()
            )));
        }
    }
    let index = Index::in_memory(IndexConfig::default()).map_err(|e| EvalError::Search(e.to_string()))?;
    let opts = IngestOptions {
        keep_source: false,
        ..IngestOptions::default()
    };
    let mut done = 0;
    let mut rows = Vec::new();
    for size in sizes {
        index_models(&index, &corpus[done..size], opts).map_err(|e| EvalError::Search(e.to_string()))?;
        done = size;
        for bucket in QueryBucket::ALL {
            let mut phases: [Vec<Duration>; 4] = Default::default();
            for q in queries.iter().filter(|q| bucket_of(q) == bucket) {
                let out = search_model(&index, q, params, max_results, false)
                    .map_err(|e| EvalError::Search(e.to_string()))?;
                phases[0].push(out.timing.paths);
                phases[1].push(out.timing.get);
                phases[2].push(out.timing.score);
                phases[3].push(out.timing.total);
            }
            rows.push(LatencyRow {
                index_size: size as u64,
                bucket,
                queries: phases[3].len() as u64,
                paths: PhaseStat::of(&phases[0]),
                get: PhaseStat::of(&phases[1]),
                score: PhaseStat::of(&phases[2]),
                total: PhaseStat::of(&phases[3]),
            });
        }
    }
    Ok(rows)
}

/// Long format: index_size, bucket, phase, mean_ms, max_ms.
pub fn write_latency_csv<W: Write>(rows: &[LatencyRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index_size", "bucket", "phase", "mean_ms", "max_ms"])?;
    for r in rows {
        for (phase, s) in [("paths", r.paths), ("get", r.get), ("score", r.score), ("total", r.total)] {
            out.write_record([
                r.index_size.to_string(),
                r.bucket.as_str().to_string(),
                phase.to_string(),
                format!("{:.4}", s.mean_ms),
                format!("{:.4}", s.max_ms),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
