//! Turning a directory of model files into an index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use globset::{GlobBuilder, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::index::{Index, IndexDoc, IndexError, IndexStats, StopPathReport, MANIFEST_FILE};
use crate::model::{parse_model, Model, ModelFormat};

/// Files above this size are not ingested.
pub const MAX_MODEL_BYTES: u64 = 32 * 1024 * 1024;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_GLOBS: &[&str] = &["**/*.json", "**/*.xmi", "**/*.ecore"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("corpus root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("bad glob '{glob}': {message}")]
    Glob { glob: String, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// path as found during the crawl
    pub source_path: String,
    pub model_type: String,
    pub model_id: String,
    /// hex SHA-256 of the file contents
    pub sha256: String,
    pub size: u64,
    pub format: ModelFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: String,
    pub created: DateTime<Utc>,
    pub entries: Vec<ManifestEntry>,
    /// files seen by the crawl but left out of `entries`
    #[serde(default)]
    pub skipped: Vec<Skip>,
}

impl CorpusManifest {
    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| IngestError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).expect("plain struct");
        fs::write(path, text).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// SHA-256 over the sorted `(model_id, sha256)` pairs: identifies the
    /// corpus independently of where and when it was crawled.
    pub fn corpus_hash(&self) -> String {
        let mut pairs: Vec<(&str, &str)> = self
            .entries
            .iter()
            .map(|e| (e.model_id.as_str(), e.sha256.as_str()))
            .collect();
        pairs.sort_unstable();
        let mut h = Sha256::new();
        for (id, sha) in pairs {
            h.update(id.as_bytes());
            h.update([0]);
            h.update(sha.as_bytes());
            h.update([b'\n']);
        }
        hex::encode(h.finalize())
    }
}

fn build_globs(globs: &[String]) -> Result<GlobSet, IngestError> {
    let mut b = GlobSetBuilder::new();
    for g in globs {
        let glob = GlobBuilder::new(g)
            .literal_separator(true)
            .build()
            .map_err(|e| IngestError::Glob {
                glob: g.clone(),
                message: e.to_string(),
            })?;
        b.add(glob);
    }
    b.build().map_err(|e| IngestError::Glob {
        glob: globs.join(" "),
        message: e.to_string(),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<first 8 hex digits of the content hash>-<file stem>`
pub fn model_id_for(path: &Path, sha256: &str) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{}-{stem}", &sha256[..8])
}

/// List the model files under `root` matching `include_globs` (relative to
/// `root`, `/`-separated; `*` and `?` stay within a path component, `**`
/// spans components). Traversal order is sorted.
pub fn crawl_directory(
    root: &Path,
    model_type: &str,
    include_globs: &[String],
) -> Result<CorpusManifest, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::MissingRoot(root.to_path_buf()));
    }
    let globs = if include_globs.is_empty() {
        build_globs(&DEFAULT_GLOBS.iter().map(|s| s.to_string()).collect::<Vec<_>>())?
    } else {
        build_globs(include_globs)?
    };
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut seen: HashMap<String, String> = HashMap::new();
    let mut ids = HashSet::new();

    for item in walkdir::WalkDir::new(root).sort_by_file_name() {
        let item = match item {
            Ok(i) => i,
            Err(e) => {
                let path = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                skipped.push(Skip {
                    path,
                    reason: format!("unreadable: {e}"),
                });
                continue;
            }
        };
        if !item.file_type().is_file() {
            continue;
        }
        let path = item.path();
        let rel = path.strip_prefix(root).unwrap_or(path);
        let rel_str = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if !globs.is_match(&rel_str) {
            continue;
        }
        let shown = path.display().to_string();
        let size = match item.metadata() {
            Ok(m) => m.len(),
            Err(e) => {
                skipped.push(Skip {
                    path: shown,
                    reason: format!("unreadable: {e}"),
                });
                continue;
            }
        };
        if size > MAX_MODEL_BYTES {
            skipped.push(Skip {
                path: shown,
                reason: format!("larger than {} MiB ({size} bytes)", MAX_MODEL_BYTES >> 20),
            });
            continue;
        }
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                skipped.push(Skip {
                    path: shown,
                    reason: format!("unreadable: {e}"),
                });
                continue;
            }
        };
        let sha = sha256_hex(&bytes);
        if let Some(first) = seen.get(&sha) {
            skipped.push(Skip {
                path: shown,
                reason: format!("duplicate of {first}"),
            });
            continue;
        }
        let model_id = model_id_for(path, &sha);
        if !ids.insert(model_id.clone()) {
            skipped.push(Skip {
                path: shown,
                reason: format!("model id '{model_id}' already taken"),
            });
            continue;
        }
        seen.insert(sha.clone(), shown.clone());
        let format = ModelFormat::from_path(path).unwrap_or_else(|| ModelFormat::sniff(&bytes));
        entries.push(ManifestEntry {
            source_path: shown,
            model_type: model_type.to_string(),
            model_id,
            sha256: sha,
            size,
            format,
        });
    }
    Ok(CorpusManifest {
        root: root.display().to_string(),
        created: Utc::now(),
        entries,
        skipped,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub batch_size: usize,
    /// keep the raw file bytes in the index (served back by `GET /model`)
    pub keep_source: bool,
    /// run the stop-path pass after the last batch
    pub stop_paths: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            batch_size: DEFAULT_BATCH_SIZE,
            keep_source: true,
            stop_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub indexed: u64,
    pub skipped: Vec<Skip>,
    pub stop_paths: Option<StopPathReport>,
    pub elapsed_ms: f64,
    pub stats: Vec<IndexStats>,
}

enum Prepared {
    Doc(Box<IndexDoc>),
    Skip(Skip),
}

fn prepare(index: &Index, e: &ManifestEntry, keep_source: bool) -> Prepared {
    let skip = |reason: String| {
        Prepared::Skip(Skip {
            path: e.source_path.clone(),
            reason,
        })
    };
    let bytes = match fs::read(&e.source_path) {
        Ok(b) => b,
        Err(err) => return skip(format!("unreadable: {err}")),
    };
    if sha256_hex(&bytes) != e.sha256 {
        return skip("contents changed since the crawl".into());
    }
    let mut model = match parse_model(&bytes, e.format) {
        Ok(m) => m,
        Err(err) => return skip(format!("parse error: {err}")),
    };
    model.model_type = e.model_type.clone();
    let bop = index.pipeline().encode(&model);
    Prepared::Doc(Box::new(IndexDoc {
        id: e.model_id.clone(),
        model_type: e.model_type.clone(),
        bop,
        source_uri: e.source_path.clone(),
        sha256: Some(e.sha256.clone()),
        source: keep_source.then(|| (e.format, bytes)),
    }))
}

/// Parse, encode and index every manifest entry, then run the stop-path
/// pass for each model type touched. Files that fail to parse or whose id is
/// already indexed are skipped; storage errors abort, leaving the batches
/// written so far in place. The manifest is saved next to the index.
pub fn index_corpus(
    index: &Index,
    manifest: &CorpusManifest,
    opts: IngestOptions,
) -> Result<IndexReport, IngestError> {
    let started = Instant::now();
    let batch_size = opts.batch_size.max(1);
    let mut types: Vec<String> = manifest.entries.iter().map(|e| e.model_type.clone()).collect();
    types.sort();
    types.dedup();
    for t in &types {
        index.create_table(t)?;
    }

    let reader = index.reader();
    let mut indexed = 0;
    let mut skipped = Vec::new();
    for chunk in manifest.entries.chunks(batch_size) {
        let mut docs = Vec::with_capacity(chunk.len());
        let prepared: Vec<Prepared> = chunk
            .par_iter()
            .map(|e| match reader.model_type_of(&e.model_id) {
                Ok(Some(_)) => Prepared::Skip(Skip {
                    path: e.source_path.clone(),
                    reason: format!("model '{}' is already indexed", e.model_id),
                }),
                Ok(None) => prepare(index, e, opts.keep_source),
                Err(err) => Prepared::Skip(Skip {
                    path: e.source_path.clone(),
                    reason: err.to_string(),
                }),
            })
            .collect();
        for p in prepared {
            match p {
                Prepared::Doc(d) => docs.push(*d),
                Prepared::Skip(s) => {
                    log::warn!("skipping {}: {}", s.path, s.reason);
                    skipped.push(s);
                }
            }
        }
        indexed += docs.len() as u64;
        index.index_batch(docs)?;
    }
    finish_ingest(index, &types, indexed, skipped, started, opts, Some(manifest))
}

/// Index models that are already in memory, keyed by id. Used for
/// generated corpora.
pub fn index_models(
    index: &Index,
    models: &[(String, Model)],
    opts: IngestOptions,
) -> Result<IndexReport, IngestError> {
    let started = Instant::now();
    let mut types: Vec<String> = models.iter().map(|(_, m)| m.model_type.clone()).collect();
    types.sort();
    types.dedup();
    for t in &types {
        index.create_table(t)?;
    }
    let mut indexed = 0;
    for chunk in models.chunks(opts.batch_size.max(1)) {
        let docs: Vec<IndexDoc> = chunk
            .par_iter()
            .map(|(id, m)| {
                let mut d = IndexDoc::new(id.clone(), m.model_type.clone(), index.pipeline().encode(m));
                d.source_uri = m.source_uri.clone();
                if opts.keep_source {
                    let json = crate::model::to_json(m).into_bytes();
                    d.sha256 = Some(sha256_hex(&json));
                    d.source = Some((ModelFormat::Json, json));
                }
                d
            })
            .collect();
        indexed += docs.len() as u64;
        index.index_batch(docs)?;
    }
    finish_ingest(index, &types, indexed, Vec::new(), started, opts, None)
}

fn finish_ingest(
    index: &Index,
    types: &[String],
    indexed: u64,
    skipped: Vec<Skip>,
    started: Instant,
    opts: IngestOptions,
    manifest: Option<&CorpusManifest>,
) -> Result<IndexReport, IngestError> {
    let mut stop_report = None;
    if opts.stop_paths {
        for t in types {
            let r = index.process_stop_paths(t)?;
            log::info!("{t}: {} stop paths over {} models", r.stop_paths, r.corpus_size);
            stop_report = Some(r);
        }
    }
    index.compact()?;
    if let (Some(dir), Some(m)) = (index.dir(), manifest) {
        save_manifest(dir, m)?;
    }
    let mut stats = Vec::new();
    for t in types {
        stats.push(index.table(t)?.stats()?);
    }
    Ok(IndexReport {
        indexed,
        skipped,
        stop_paths: stop_report,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        stats,
    })
}

/// Merge `m` into the manifest stored in the index directory.
fn save_manifest(dir: &Path, m: &CorpusManifest) -> Result<(), IngestError> {
    let path = dir.join(MANIFEST_FILE);
    let mut merged = if path.exists() {
        CorpusManifest::read(&path)?
    } else {
        CorpusManifest {
            root: m.root.clone(),
            created: m.created,
            entries: Vec::new(),
            skipped: Vec::new(),
        }
    };
    let known: HashSet<String> = merged.entries.iter().map(|e| e.model_id.clone()).collect();
    merged
        .entries
        .extend(m.entries.iter().filter(|e| !known.contains(&e.model_id)).cloned());
    merged.skipped.extend(m.skipped.iter().cloned());
    merged.write(&path)
}

/// Re-run the pipeline on up to `n` manifest entries and compare with the
/// stored bags. Returns the ids whose stored bag differs.
pub fn audit(index: &Index, manifest: &CorpusManifest, n: usize) -> Result<Vec<String>, IngestError> {
    let reader = index.reader();
    let mut bad = Vec::new();
    let mut tables = BTreeMap::new();
    let step = (manifest.entries.len() / n.max(1)).max(1);
    for e in manifest.entries.iter().step_by(step).take(n) {
        if reader.model_type_of(&e.model_id)?.is_none() {
            continue;
        }
        let table = match tables.get(&e.model_type) {
            Some(t) => t,
            None => tables.entry(e.model_type.clone()).or_insert(reader.table(&e.model_type)?),
        };
        let fresh = match prepare(index, e, false) {
            Prepared::Doc(d) => d.bop,
            Prepared::Skip(_) => {
                bad.push(e.model_id.clone());
                continue;
            }
        };
        if table.stored_bop(&e.model_id)?.as_ref() != Some(&fresh) {
            bad.push(e.model_id.clone());
        }
    }
    Ok(bad)
}
