//! Inverted index from paths to the models that contain them.
//!
//! Every model type gets its own posting table: row key and qualifier come
//! from [`split_path`], the cell holds a [`PostingPayload`]. Corpus
//! statistics, per-model totals, metadata, source bytes, stored bags and the
//! stop-path set live in a sidecar table of the same store and are written in
//! the same batch as the postings.
//!
//! On disk an index directory holds `store/` (the key-value log),
//! `meta.json`, `stoppaths.bin`, and, once written by ingestion,
//! `manifest.json`.

mod codec;
pub mod keys;
pub mod payload;
pub mod store;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::graph::{BagOfPaths, FilterConfig, PathString};
use crate::model::ModelFormat;
use crate::normalize::{
    compute_stop_paths, filter_stop_paths, NormalizeError, StopPathSet, TokenizerConfig,
    DEFAULT_STOP_PATH_THRESHOLD,
};
use crate::pipeline::Pipeline;

pub use codec::CodecError;
pub use keys::{decode_key, decode_segment, encode_segment, split_path, KeyError, SplitKey};
pub use payload::{Posting, PostingPayload, PAYLOAD_VERSION};
pub use store::{Columns, KvStore, Mutation, OrderedStore, StoreError, StoreSnapshot, WriteBatch};

use codec::{decode_varint, encode_varint, Reader, Writer};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const STOPPATHS_FILE: &str = "stoppaths.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STORE_DIR: &str = "store";
pub const LOCK_FILE: &str = "index.lock";

const MODELS_TABLE: &str = "models";
const ROW_STATS: &[u8] = b"stats";
const ROW_TOTAL: &[u8] = b"total";
const ROW_META: &[u8] = b"meta";
const ROW_SOURCE: &[u8] = b"source";
const ROW_BOP: &[u8] = b"bop";
const ROW_STOP: &[u8] = b"stop";
const ROW_STOPINFO: &[u8] = b"stopinfo";
const COL_T: &[u8] = b"t";
const COL_SUM: &[u8] = b"sum";
const COL_TYPE: &[u8] = b"type";
const COL_THRESHOLD: &[u8] = b"threshold";
const COL_N: &[u8] = b"n";

fn postings_table(model_type: &str) -> String {
    format!("p/{model_type}")
}

fn sidecar_table(model_type: &str) -> String {
    format!("s/{model_type}")
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad index metadata: {0}")]
    Meta(String),
    #[error("model '{0}' is already indexed")]
    DuplicateId(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("no index for model type '{0}'")]
    UnknownModelType(String),
    #[error("model '{0}': bag of paths must be normalized before indexing")]
    NotNormalized(String),
    #[error("invalid model type '{0}'")]
    BadModelType(String),
    #[error("index at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("{0} already contains an index")]
    Exists(PathBuf),
    #[error("{0} does not contain an index")]
    NotAnIndex(PathBuf),
    #[error("index configuration mismatch: {0}")]
    Incompatible(String),
    #[error("index is open read-only")]
    ReadOnly,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// How models are turned into bags of paths, and the stop-path threshold.
/// Fixed when an index is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub tokenizer: TokenizerConfig,
    pub filter: FilterConfig,
    pub stop_path_threshold: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            tokenizer: TokenizerConfig::default(),
            filter: FilterConfig::default(),
            stop_path_threshold: DEFAULT_STOP_PATH_THRESHOLD,
        }
    }
}

impl IndexConfig {
    fn validate(&self) -> Result<(), IndexError> {
        self.filter.validate().map_err(IndexError::Meta)?;
        if !(self.stop_path_threshold > 0.0 && self.stop_path_threshold <= 1.0) {
            return Err(NormalizeError::BadThreshold(self.stop_path_threshold).into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaFile {
    format_version: u32,
    payload_version: u8,
    model_types: Vec<String>,
    stopword_list_id: String,
    stop_path_threshold: f64,
    tokenizer: TokenizerConfig,
    filter: FilterConfig,
}

/// What the index keeps about a model besides its postings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub id: String,
    pub model_type: String,
    pub source_uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<ModelFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    /// |BoP| before stop-path removal
    pub paths_before_stop: u64,
}

/// A model ready to be indexed.
#[derive(Debug, Clone)]
pub struct IndexDoc {
    pub id: String,
    pub model_type: String,
    /// normalized, not yet stop-path filtered
    pub bop: BagOfPaths,
    pub source_uri: String,
    pub sha256: Option<String>,
    pub source: Option<(ModelFormat, Vec<u8>)>,
}

impl IndexDoc {
    pub fn new(id: impl Into<String>, model_type: impl Into<String>, bop: BagOfPaths) -> Self {
        IndexDoc {
            id: id.into(),
            model_type: model_type.into(),
            bop,
            source_uri: String::new(),
            sha256: None,
            source: None,
        }
    }
}

/// Corpus statistics for one model type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub model_type: String,
    /// number of indexed models
    pub t: u64,
    /// sum of |BoP| over indexed models, after stop-path removal
    pub total_paths: u64,
    pub avdl: f64,
    pub stop_paths: u64,
    pub stop_path_threshold: f64,
}

/// Outcome of a stop-path pass over one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopPathReport {
    pub model_type: String,
    pub corpus_size: u64,
    pub threshold: f64,
    pub stop_paths: u64,
    /// occurrences left out of the postings, over all models
    pub removed_occurrences: u64,
}

/// Raw bytes of an indexed model plus its metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredModel {
    pub meta: ModelMeta,
    pub source: Option<Vec<u8>>,
}

struct LockFile(PathBuf);

impl LockFile {
    fn acquire(dir: &Path) -> Result<LockFile, IndexError> {
        let path = dir.join(LOCK_FILE);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    use std::io::Write;
                    write!(f, "{}", std::process::id()).map_err(io_err(&path))?;
                    return Ok(LockFile(path));
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    if is_stale(holder.trim()) {
                        log::warn!("removing stale lock {} (pid {})", path.display(), holder.trim());
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(IndexError::Locked(dir.to_path_buf()));
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Err(IndexError::Locked(dir.to_path_buf()))
    }
}

/// A lock whose holder is gone. Only decidable where `/proc` exists.
fn is_stale(pid: &str) -> bool {
    let Ok(pid) = pid.parse::<u32>() else {
        return false;
    };
    let proc_root = Path::new("/proc");
    proc_root.is_dir() && pid != std::process::id() && !proc_root.join(pid.to_string()).exists()
}

impl Drop for LockFile {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct Index {
    store: KvStore,
    dir: Option<PathBuf>,
    config: IndexConfig,
    pipeline: Pipeline,
    read_only: bool,
    writer: Mutex<()>,
    _lock: Option<LockFile>,
}

impl Index {
    pub fn in_memory(config: IndexConfig) -> Result<Index, IndexError> {
        config.validate()?;
        Ok(Index {
            store: KvStore::in_memory(),
            dir: None,
            pipeline: Pipeline::new(config.filter.clone(), config.tokenizer.clone())?,
            config,
            read_only: false,
            writer: Mutex::new(()),
            _lock: None,
        })
    }

    /// Create a new index directory. Fails if one is already there.
    pub fn create(dir: &Path, config: IndexConfig) -> Result<Index, IndexError> {
        config.validate()?;
        if dir.join(META_FILE).exists() {
            return Err(IndexError::Exists(dir.to_path_buf()));
        }
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let lock = LockFile::acquire(dir)?;
        let store = KvStore::open(&dir.join(STORE_DIR), false)?;
        let index = Index {
            store,
            dir: Some(dir.to_path_buf()),
            pipeline: Pipeline::new(config.filter.clone(), config.tokenizer.clone())?,
            config,
            read_only: false,
            writer: Mutex::new(()),
            _lock: Some(lock),
        };
        index.write_meta_file()?;
        index.write_stoppaths_file()?;
        Ok(index)
    }

    /// Open an existing index for writing; takes the writer lock.
    pub fn open(dir: &Path) -> Result<Index, IndexError> {
        Self::open_inner(dir, false)
    }

    /// Open an existing index for reading only; no lock is taken.
    pub fn open_read_only(dir: &Path) -> Result<Index, IndexError> {
        Self::open_inner(dir, true)
    }

    /// Open the index in `dir`, creating it with `config` if there is none.
    /// An existing index must have been built with the same configuration.
    pub fn open_or_create(dir: &Path, config: IndexConfig) -> Result<Index, IndexError> {
        if !dir.join(META_FILE).exists() {
            return Self::create(dir, config);
        }
        let index = Self::open(dir)?;
        if index.config != config {
            return Err(IndexError::Incompatible(format!(
                "{} was built with a different tokenizer, filter or threshold",
                dir.display()
            )));
        }
        Ok(index)
    }

    fn open_inner(dir: &Path, read_only: bool) -> Result<Index, IndexError> {
        let meta_path = dir.join(META_FILE);
        if !meta_path.exists() {
            return Err(IndexError::NotAnIndex(dir.to_path_buf()));
        }
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: MetaFile = serde_json::from_str(&text)
            .map_err(|e| IndexError::Meta(format!("{}: {e}", meta_path.display())))?;
        if meta.format_version != FORMAT_VERSION || meta.payload_version != PAYLOAD_VERSION {
            return Err(IndexError::Incompatible(format!(
                "index format {}/{} is not supported (expected {FORMAT_VERSION}/{PAYLOAD_VERSION})",
                meta.format_version, meta.payload_version
            )));
        }
        if meta.stopword_list_id != meta.tokenizer.stopword_list_id {
            return Err(IndexError::Meta("stop-word list ids disagree".into()));
        }
        let config = IndexConfig {
            tokenizer: meta.tokenizer,
            filter: meta.filter,
            stop_path_threshold: meta.stop_path_threshold,
        };
        config.validate()?;
        let lock = if read_only { None } else { Some(LockFile::acquire(dir)?) };
        let store = KvStore::open(&dir.join(STORE_DIR), read_only)?;
        Ok(Index {
            store,
            dir: Some(dir.to_path_buf()),
            pipeline: Pipeline::new(config.filter.clone(), config.tokenizer.clone())?,
            config,
            read_only,
            writer: Mutex::new(()),
            _lock: lock,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    /// The pipeline every indexed model and every query goes through.
    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// A consistent view of the index as of now.
    pub fn reader(&self) -> IndexReader {
        IndexReader {
            snap: self.store.snapshot(),
        }
    }

    /// Shortcut for `reader().table(model_type)`.
    pub fn table(&self, model_type: &str) -> Result<TableReader, IndexError> {
        self.reader().table(model_type)
    }

    /// Storage `get` calls served so far.
    pub fn get_count(&self) -> u64 {
        self.store.get_count()
    }

    pub fn model_types(&self) -> Vec<String> {
        self.reader().model_types()
    }

    fn check_writable(&self) -> Result<(), IndexError> {
        if self.read_only {
            Err(IndexError::ReadOnly)
        } else {
            Ok(())
        }
    }

    /// Register an empty table for `model_type`. A no-op if it exists.
    pub fn create_table(&self, model_type: &str) -> Result<(), IndexError> {
        self.check_writable()?;
        check_model_type(model_type)?;
        let _w = self.writer.lock().expect("writer lock poisoned");
        if self.reader().has_table(model_type) {
            return Ok(());
        }
        let mut batch = WriteBatch::new();
        put_stats(&mut batch, model_type, 0, 0);
        self.store.write(batch)?;
        self.write_meta_file()
    }

    pub fn index_model(&self, doc: IndexDoc) -> Result<(), IndexError> {
        self.index_batch(vec![doc])
    }

    /// Index several models in one atomic write. Either every model is
    /// indexed or none is.
    pub fn index_batch(&self, docs: Vec<IndexDoc>) -> Result<(), IndexError> {
        self.check_writable()?;
        if docs.is_empty() {
            return Ok(());
        }
        let _w = self.writer.lock().expect("writer lock poisoned");
        let snap = self.store.snapshot();

        let mut seen = HashSet::new();
        for d in &docs {
            check_model_type(&d.model_type)?;
            if d.id.is_empty() {
                return Err(IndexError::Meta("empty model id".into()));
            }
            if !d.bop.is_normalized() {
                return Err(IndexError::NotNormalized(d.id.clone()));
            }
            if !seen.insert(d.id.as_str())
                || !snap.get(MODELS_TABLE, d.id.as_bytes(), Some(&[COL_TYPE]))?.is_empty()
            {
                return Err(IndexError::DuplicateId(d.id.clone()));
            }
        }

        let mut by_type: BTreeMap<&str, Vec<&IndexDoc>> = BTreeMap::new();
        for d in &docs {
            by_type.entry(d.model_type.as_str()).or_default().push(d);
        }

        let mut batch = WriteBatch::new();
        let mut new_tables = false;
        for (model_type, docs) in by_type {
            let table = postings_table(model_type);
            let side = sidecar_table(model_type);
            let (t, sum) = read_stats(&*snap, model_type)?.unwrap_or_else(|| {
                new_tables = true;
                (0, 0)
            });
            let stop = read_stop_paths(&*snap, model_type)?;

            let mut pending: BTreeMap<Vec<u8>, BTreeMap<Vec<u8>, Vec<(&str, Posting)>>> =
                BTreeMap::new();
            let mut added = 0;
            for d in &docs {
                let filtered = filter_stop_paths(&d.bop, &stop);
                let total = filtered.total();
                for (path, &count) in filtered.iter() {
                    let key = split_path(path)?;
                    pending
                        .entry(key.row_key)
                        .or_default()
                        .entry(key.qualifier)
                        .or_default()
                        .push((d.id.as_str(), Posting { count, total }));
                }
                // validate the unfiltered bag too: stop paths can change later
                for path in d.bop.paths() {
                    keys::check_canonical(path)?;
                }
                added += total;

                let id = d.id.as_bytes();
                let meta = ModelMeta {
                    id: d.id.clone(),
                    model_type: model_type.to_string(),
                    source_uri: d.source_uri.clone(),
                    format: d.source.as_ref().map(|(f, _)| *f),
                    sha256: d.sha256.clone(),
                    paths_before_stop: d.bop.total(),
                };
                batch.put(&side, ROW_TOTAL, id, encode_varint(total));
                batch.put(&side, ROW_META, id, serde_json::to_vec(&meta).expect("plain struct"));
                batch.put(&side, ROW_BOP, id, encode_bop(&d.bop)?);
                if let Some((_, bytes)) = &d.source {
                    batch.put(&side, ROW_SOURCE, id, bytes.clone());
                }
                batch.put(MODELS_TABLE, id, COL_TYPE, model_type.as_bytes().to_vec());
            }

            for (row, cols) in pending {
                let wanted: Vec<&[u8]> = cols.keys().map(Vec::as_slice).collect();
                let mut existing = snap.get(&table, &row, Some(&wanted))?;
                for (qual, postings) in cols {
                    let mut payload = match existing.remove(&qual) {
                        Some(bytes) => PostingPayload::decode(&bytes)?,
                        None => PostingPayload::default(),
                    };
                    for (id, p) in postings {
                        payload.entries.insert(id.to_string(), p);
                    }
                    batch.put(&table, &row, &qual, payload.encode());
                }
            }
            put_stats(&mut batch, model_type, t + docs.len() as u64, sum + added);
        }
        self.store.write(batch)?;
        if new_tables {
            self.write_meta_file()?;
        }
        Ok(())
    }

    /// Remove a model and everything it contributed.
    pub fn remove_model(&self, id: &str) -> Result<(), IndexError> {
        self.check_writable()?;
        let _w = self.writer.lock().expect("writer lock poisoned");
        let snap = self.store.snapshot();
        let model_type = model_type_of(&*snap, id)?.ok_or_else(|| IndexError::UnknownModel(id.into()))?;
        let side = sidecar_table(&model_type);
        let table = postings_table(&model_type);
        let bop = read_bop(&*snap, &model_type, id)?.ok_or_else(|| IndexError::UnknownModel(id.into()))?;
        let stop = read_stop_paths(&*snap, &model_type)?;
        let filtered = filter_stop_paths(&bop, &stop);

        let mut batch = WriteBatch::new();
        let mut by_row: BTreeMap<Vec<u8>, Vec<Vec<u8>>> = BTreeMap::new();
        for path in filtered.paths() {
            let k = split_path(path)?;
            by_row.entry(k.row_key).or_default().push(k.qualifier);
        }
        for (row, quals) in by_row {
            let wanted: Vec<&[u8]> = quals.iter().map(Vec::as_slice).collect();
            for (qual, bytes) in snap.get(&table, &row, Some(&wanted))? {
                let mut payload = PostingPayload::decode(&bytes)?;
                payload.entries.remove(id);
                if payload.is_empty() {
                    batch.delete(&table, &row, &qual);
                } else {
                    batch.put(&table, &row, &qual, payload.encode());
                }
            }
        }
        let key = id.as_bytes();
        for row in [ROW_TOTAL, ROW_META, ROW_BOP, ROW_SOURCE] {
            batch.delete(&side, row, key);
        }
        batch.delete_row(MODELS_TABLE, key);
        let (t, sum) = read_stats(&*snap, &model_type)?.unwrap_or((0, 0));
        put_stats(&mut batch, &model_type, t.saturating_sub(1), sum.saturating_sub(filtered.total()));
        self.store.write(batch)?;
        Ok(())
    }

    /// Recompute the stop-path set of one table from the stored bags and
    /// rebuild its postings without those paths. Per-model totals and the
    /// corpus statistics are updated in the same write.
    pub fn process_stop_paths(&self, model_type: &str) -> Result<StopPathReport, IndexError> {
        self.check_writable()?;
        let _w = self.writer.lock().expect("writer lock poisoned");
        let snap = self.store.snapshot();
        if read_stats(&*snap, model_type)?.is_none() {
            return Err(IndexError::UnknownModelType(model_type.into()));
        }
        let side = sidecar_table(model_type);
        let table = postings_table(model_type);

        let mut bags = Vec::new();
        for (id, bytes) in snap.get(&side, ROW_BOP, None)? {
            let id = String::from_utf8(id).map_err(|_| CodecError("model id is not UTF-8".into()))?;
            bags.push((id, decode_bop(&bytes)?));
        }
        let mut df: BTreeMap<PathString, u64> = BTreeMap::new();
        for (_, bop) in &bags {
            for p in bop.paths() {
                *df.entry(p.clone()).or_insert(0) += 1;
            }
        }
        let corpus_size = bags.len() as u64;
        let stop = compute_stop_paths(&df, corpus_size, self.config.stop_path_threshold)?;

        let mut batch = WriteBatch::new();
        batch.drop_table(&table);
        batch.delete_row(&side, ROW_STOP);
        batch.delete_row(&side, ROW_TOTAL);
        let mut postings: BTreeMap<SplitKey, PostingPayload> = BTreeMap::new();
        let mut sum = 0;
        let mut removed = 0;
        for (id, bop) in &bags {
            let filtered = filter_stop_paths(bop, &stop);
            let total = filtered.total();
            removed += bop.total() - total;
            sum += total;
            for (path, &count) in filtered.iter() {
                postings
                    .entry(split_path(path)?)
                    .or_default()
                    .entries
                    .insert(id.clone(), Posting { count, total });
            }
            batch.put(&side, ROW_TOTAL, id.as_bytes(), encode_varint(total));
        }
        for (key, payload) in postings {
            batch.put(&table, &key.row_key, &key.qualifier, payload.encode());
        }
        for p in &stop.paths {
            batch.put(&side, ROW_STOP, &encode_pair(&split_path(p)?), Vec::new());
        }
        let mut w = Writer::new();
        w.f64(stop.threshold);
        batch.put(&side, ROW_STOPINFO, COL_THRESHOLD, w.buf);
        batch.put(&side, ROW_STOPINFO, COL_N, encode_varint(corpus_size));
        put_stats(&mut batch, model_type, corpus_size, sum);
        self.store.write(batch)?;
        self.write_stoppaths_file()?;
        Ok(StopPathReport {
            model_type: model_type.to_string(),
            corpus_size,
            threshold: stop.threshold,
            stop_paths: stop.len() as u64,
            removed_occurrences: removed,
        })
    }

    /// Rewrite the storage log compactly. In memory this does nothing.
    pub fn compact(&self) -> Result<(), IndexError> {
        self.check_writable()?;
        let _w = self.writer.lock().expect("writer lock poisoned");
        Ok(self.store.compact()?)
    }

    fn write_meta_file(&self) -> Result<(), IndexError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let meta = MetaFile {
            format_version: FORMAT_VERSION,
            payload_version: PAYLOAD_VERSION,
            model_types: self.model_types(),
            stopword_list_id: self.config.tokenizer.stopword_list_id.clone(),
            stop_path_threshold: self.config.stop_path_threshold,
            tokenizer: self.config.tokenizer.clone(),
            filter: self.config.filter.clone(),
        };
        let text = serde_json::to_string_pretty(&meta).expect("plain struct");
        write_atomically(&dir.join(META_FILE), text.as_bytes())
    }

    fn write_stoppaths_file(&self) -> Result<(), IndexError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let reader = self.reader();
        let mut sets = BTreeMap::new();
        for mt in reader.model_types() {
            sets.insert(mt.clone(), read_stop_paths(&*reader.snap, &mt)?);
        }
        write_atomically(&dir.join(STOPPATHS_FILE), &encode_stoppaths(&sets)?)
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), IndexError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn check_model_type(model_type: &str) -> Result<(), IndexError> {
    let ok = !model_type.is_empty()
        && model_type
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(IndexError::BadModelType(model_type.to_string()))
    }
}

fn put_stats(batch: &mut WriteBatch, model_type: &str, t: u64, sum: u64) {
    let side = sidecar_table(model_type);
    batch.put(&side, ROW_STATS, COL_T, encode_varint(t));
    batch.put(&side, ROW_STATS, COL_SUM, encode_varint(sum));
}

fn read_stats(snap: &dyn StoreSnapshot, model_type: &str) -> Result<Option<(u64, u64)>, IndexError> {
    let cols = snap.get(&sidecar_table(model_type), ROW_STATS, None)?;
    let (Some(t), Some(sum)) = (cols.get(COL_T), cols.get(COL_SUM)) else {
        return Ok(None);
    };
    Ok(Some((decode_varint(t)?, decode_varint(sum)?)))
}

fn read_stop_paths(snap: &dyn StoreSnapshot, model_type: &str) -> Result<StopPathSet, IndexError> {
    let side = sidecar_table(model_type);
    let mut set = StopPathSet::empty();
    let info = snap.get(&side, ROW_STOPINFO, None)?;
    if let Some(b) = info.get(COL_THRESHOLD) {
        let mut r = Reader::new(b);
        set.threshold = r.f64()?;
        r.finish()?;
    }
    if let Some(b) = info.get(COL_N) {
        set.corpus_size_at_computation = decode_varint(b)?;
    }
    for pair in snap.get(&side, ROW_STOP, None)?.into_keys() {
        set.paths.insert(decode_pair(&pair)?);
    }
    Ok(set)
}

/// A split key as one byte string: both halves length-prefixed. Joining
/// them bare would be ambiguous.
fn encode_pair(k: &SplitKey) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(&k.row_key);
    w.bytes(&k.qualifier);
    w.buf
}

fn decode_pair(b: &[u8]) -> Result<PathString, IndexError> {
    let mut r = Reader::new(b);
    let row = r.bytes()?;
    let qual = r.bytes()?;
    r.finish()?;
    Ok(decode_key(row, qual)?)
}

fn model_type_of(snap: &dyn StoreSnapshot, id: &str) -> Result<Option<String>, IndexError> {
    let cols = snap.get(MODELS_TABLE, id.as_bytes(), Some(&[COL_TYPE]))?;
    match cols.get(COL_TYPE) {
        Some(b) => Ok(Some(
            String::from_utf8(b.clone()).map_err(|_| CodecError("model type is not UTF-8".into()))?,
        )),
        None => Ok(None),
    }
}

fn read_bop(snap: &dyn StoreSnapshot, model_type: &str, id: &str) -> Result<Option<BagOfPaths>, IndexError> {
    let cols = snap.get(&sidecar_table(model_type), ROW_BOP, Some(&[id.as_bytes()]))?;
    cols.get(id.as_bytes()).map(|b| decode_bop(b)).transpose()
}

fn encode_bop(bop: &BagOfPaths) -> Result<Vec<u8>, IndexError> {
    let mut w = Writer::new();
    w.varint(bop.distinct() as u64);
    for (p, &n) in bop.iter() {
        let k = split_path(p)?;
        w.bytes(&k.row_key);
        w.bytes(&k.qualifier);
        w.varint(n);
    }
    Ok(w.buf)
}

fn decode_bop(bytes: &[u8]) -> Result<BagOfPaths, IndexError> {
    let mut r = Reader::new(bytes);
    let n = r.varint()?;
    let mut bop = BagOfPaths::new();
    for _ in 0..n {
        let row = r.bytes()?;
        let qual = r.bytes()?;
        let count = r.varint()?;
        bop.add(decode_key(row, qual)?, count);
    }
    r.finish()?;
    Ok(bop.mark_normalized())
}

const STOPPATHS_MAGIC: &[u8; 8] = b"PMSTOP1\n";

fn encode_stoppaths(sets: &BTreeMap<String, StopPathSet>) -> Result<Vec<u8>, IndexError> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(STOPPATHS_MAGIC);
    w.varint(sets.len() as u64);
    for (mt, set) in sets {
        w.bytes(mt.as_bytes());
        w.f64(set.threshold);
        w.varint(set.corpus_size_at_computation);
        w.varint(set.paths.len() as u64);
        for p in &set.paths {
            let k = split_path(p)?;
            w.bytes(&k.row_key);
            w.bytes(&k.qualifier);
        }
    }
    Ok(w.buf)
}

/// Read a `stoppaths.bin` file: the stop-path set of every table.
pub fn read_stoppaths_file(path: &Path) -> Result<BTreeMap<String, StopPathSet>, IndexError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let body = bytes
        .strip_prefix(STOPPATHS_MAGIC.as_slice())
        .ok_or_else(|| CodecError("not a stop-path file".into()))?;
    let mut r = Reader::new(body);
    let mut out = BTreeMap::new();
    for _ in 0..r.varint()? {
        let mt = r.string()?;
        let threshold = r.f64()?;
        let corpus_size_at_computation = r.varint()?;
        let mut paths = BTreeSet::new();
        for _ in 0..r.varint()? {
            let row = r.bytes()?;
            let qual = r.bytes()?;
            paths.insert(decode_key(row, qual)?);
        }
        out.insert(
            mt,
            StopPathSet {
                paths,
                threshold,
                corpus_size_at_computation,
            },
        );
    }
    r.finish()?;
    Ok(out)
}

/// Read access to every table through one snapshot.
#[derive(Clone)]
pub struct IndexReader {
    snap: Arc<dyn StoreSnapshot>,
}

impl IndexReader {
    pub fn model_types(&self) -> Vec<String> {
        self.snap
            .tables()
            .into_iter()
            .filter_map(|t| t.strip_prefix("s/").map(str::to_string))
            .collect()
    }

    pub fn has_table(&self, model_type: &str) -> bool {
        self.model_types().iter().any(|t| t == model_type)
    }

    pub fn table(&self, model_type: &str) -> Result<TableReader, IndexError> {
        let (t, sum) = read_stats(&*self.snap, model_type)?
            .ok_or_else(|| IndexError::UnknownModelType(model_type.into()))?;
        Ok(TableReader {
            snap: self.snap.clone(),
            model_type: model_type.to_string(),
            t,
            sum,
            stop: OnceLock::new(),
        })
    }

    pub fn model_type_of(&self, id: &str) -> Result<Option<String>, IndexError> {
        model_type_of(&*self.snap, id)
    }

    /// Metadata and source bytes of a model, whatever its type.
    pub fn model(&self, id: &str) -> Result<Option<StoredModel>, IndexError> {
        let Some(mt) = self.model_type_of(id)? else {
            return Ok(None);
        };
        let side = sidecar_table(&mt);
        let key = id.as_bytes();
        let meta = self
            .snap
            .get(&side, ROW_META, Some(&[key]))?
            .remove(key)
            .ok_or_else(|| IndexError::UnknownModel(id.into()))?;
        let meta: ModelMeta =
            serde_json::from_slice(&meta).map_err(|e| IndexError::Meta(format!("model '{id}': {e}")))?;
        let source = self.snap.get(&side, ROW_SOURCE, Some(&[key]))?.remove(key);
        Ok(Some(StoredModel { meta, source }))
    }
}

/// Read access to one model type's table through one snapshot.
#[derive(Clone)]
pub struct TableReader {
    snap: Arc<dyn StoreSnapshot>,
    model_type: String,
    t: u64,
    sum: u64,
    stop: OnceLock<Arc<StopPathSet>>,
}

impl TableReader {
    pub fn model_type(&self) -> &str {
        &self.model_type
    }

    /// Number of indexed models.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Mean |BoP| over indexed models; 0 for an empty table.
    pub fn avdl(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.sum as f64 / self.t as f64
        }
    }

    pub fn stats(&self) -> Result<IndexStats, IndexError> {
        let stop = self.stop_paths()?;
        Ok(IndexStats {
            model_type: self.model_type.clone(),
            t: self.t,
            total_paths: self.sum,
            avdl: self.avdl(),
            stop_paths: stop.len() as u64,
            stop_path_threshold: stop.threshold,
        })
    }

    pub fn stop_paths(&self) -> Result<Arc<StopPathSet>, IndexError> {
        if let Some(s) = self.stop.get() {
            return Ok(s.clone());
        }
        let s = Arc::new(read_stop_paths(&*self.snap, &self.model_type)?);
        Ok(self.stop.get_or_init(|| s).clone())
    }

    /// The payloads of the requested qualifiers of one row, in a single
    /// storage read. Qualifiers that do not exist are left out.
    pub fn get_postings(
        &self,
        row_key: &[u8],
        qualifiers: &[&[u8]],
    ) -> Result<BTreeMap<Vec<u8>, PostingPayload>, IndexError> {
        if qualifiers.is_empty() {
            return Ok(BTreeMap::new());
        }
        let cols = self
            .snap
            .get(&postings_table(&self.model_type), row_key, Some(qualifiers))?;
        cols.into_iter()
            .map(|(q, v)| Ok((q, PostingPayload::decode(&v)?)))
            .collect()
    }

    /// Visit every posting cell in key order.
    pub fn scan_postings(
        &self,
        f: &mut dyn FnMut(&[u8], &[u8], PostingPayload) -> bool,
    ) -> Result<(), IndexError> {
        let mut err = None;
        self.snap.scan(&postings_table(&self.model_type), &mut |row, qual, value| {
            match PostingPayload::decode(value) {
                Ok(p) => f(row, qual, p),
                Err(e) => {
                    err = Some(e);
                    false
                }
            }
        })?;
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    /// df of every stored path, from an ordered scan of the postings.
    pub fn document_frequencies(&self) -> Result<BTreeMap<PathString, u64>, IndexError> {
        let mut out = BTreeMap::new();
        let mut err = None;
        self.scan_postings(&mut |row, qual, payload| match decode_key(row, qual) {
            Ok(p) => {
                out.insert(p, payload.df());
                true
            }
            Err(e) => {
                err = Some(e);
                false
            }
        })?;
        match err {
            Some(e) => Err(e.into()),
            None => Ok(out),
        }
    }

    /// Post-stop-path |BoP| of every model.
    pub fn totals(&self) -> Result<BTreeMap<String, u64>, IndexError> {
        let cols = self.snap.get(&sidecar_table(&self.model_type), ROW_TOTAL, None)?;
        cols.into_iter()
            .map(|(k, v)| {
                let id = String::from_utf8(k).map_err(|_| CodecError("model id is not UTF-8".into()))?;
                Ok((id, decode_varint(&v)?))
            })
            .collect()
    }

    pub fn model_ids(&self) -> Result<Vec<String>, IndexError> {
        Ok(self.totals()?.into_keys().collect())
    }

    pub fn metadata(&self) -> Result<Vec<ModelMeta>, IndexError> {
        let cols = self.snap.get(&sidecar_table(&self.model_type), ROW_META, None)?;
        cols.values()
            .map(|v| serde_json::from_slice(v).map_err(|e| IndexError::Meta(e.to_string())))
            .collect()
    }

    /// The normalized bag stored for a model, before stop-path removal.
    pub fn stored_bop(&self, id: &str) -> Result<Option<BagOfPaths>, IndexError> {
        read_bop(&*self.snap, &self.model_type, id)
    }

    /// The bag the postings reflect: the stored bag minus stop paths.
    pub fn indexed_bop(&self, id: &str) -> Result<Option<BagOfPaths>, IndexError> {
        let stop = self.stop_paths()?;
        Ok(self.stored_bop(id)?.map(|b| filter_stop_paths(&b, &stop)))
    }

    /// Every model's indexed bag, in id order.
    pub fn indexed_bops(&self) -> Result<Vec<(String, BagOfPaths)>, IndexError> {
        let stop = self.stop_paths()?;
        let cols = self.snap.get(&sidecar_table(&self.model_type), ROW_BOP, None)?;
        cols.into_iter()
            .map(|(k, v)| {
                let id = String::from_utf8(k).map_err(|_| CodecError("model id is not UTF-8".into()))?;
                Ok((id, filter_stop_paths(&decode_bop(&v)?, &stop)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexLabel;

    fn path(attr: &str, class: &str) -> PathString {
        PathString::alternating([VertexLabel::attr(attr), VertexLabel::class(class)], ["name"])
    }

    fn bag(paths: &[(&str, u64)]) -> BagOfPaths {
        paths
            .iter()
            .map(|(a, n)| (path(a, "State"), *n))
            .collect::<BagOfPaths>()
            .mark_normalized()
    }

    #[test]
    fn one_model_three_paths() {
        let idx = Index::in_memory(IndexConfig::default()).unwrap();
        idx.index_model(IndexDoc::new("m1", "uml", bag(&[("a", 1), ("b", 2), ("c", 1)])))
            .unwrap();
        let t = idx.table("uml").unwrap();
        assert_eq!(t.t(), 1);
        assert_eq!(t.avdl(), 4.0);
        assert_eq!(t.document_frequencies().unwrap().len(), 3);
    }

    #[test]
    fn shared_path_has_two_entries() {
        let idx = Index::in_memory(IndexConfig::default()).unwrap();
        idx.index_model(IndexDoc::new("m1", "uml", bag(&[("a", 1)]))).unwrap();
        idx.index_model(IndexDoc::new("m2", "uml", bag(&[("a", 3), ("b", 1)]))).unwrap();
        let t = idx.table("uml").unwrap();
        let k = split_path(&path("a", "State")).unwrap();
        let got = t.get_postings(&k.row_key, &[&k.qualifier]).unwrap();
        let payload = &got[&k.qualifier];
        assert_eq!(payload.entries["m1"], Posting { count: 1, total: 1 });
        assert_eq!(payload.entries["m2"], Posting { count: 3, total: 4 });
    }

    #[test]
    fn duplicate_and_unknown_ids() {
        let idx = Index::in_memory(IndexConfig::default()).unwrap();
        idx.index_model(IndexDoc::new("m1", "uml", bag(&[("a", 1)]))).unwrap();
        assert!(matches!(
            idx.index_model(IndexDoc::new("m1", "uml", bag(&[("a", 1)]))),
            Err(IndexError::DuplicateId(_))
        ));
        assert!(matches!(idx.remove_model("zz"), Err(IndexError::UnknownModel(_))));
        assert!(matches!(idx.table("foo"), Err(IndexError::UnknownModelType(_))));
        let raw: BagOfPaths = [(path("a", "S"), 1)].into_iter().collect();
        assert!(matches!(
            idx.index_model(IndexDoc::new("m2", "uml", raw)),
            Err(IndexError::NotNormalized(_))
        ));
    }

    #[test]
    fn remove_restores_empty_stats() {
        let idx = Index::in_memory(IndexConfig::default()).unwrap();
        idx.index_model(IndexDoc::new("m1", "uml", bag(&[("a", 1)]))).unwrap();
        idx.index_model(IndexDoc::new("m2", "uml", bag(&[("a", 2)]))).unwrap();
        idx.remove_model("m1").unwrap();
        let t = idx.table("uml").unwrap();
        assert_eq!(t.t(), 1);
        let df = t.document_frequencies().unwrap();
        assert_eq!(df[&path("a", "State")], 1);
        idx.remove_model("m2").unwrap();
        let t = idx.table("uml").unwrap();
        assert_eq!((t.t(), t.avdl()), (0, 0.0));
        assert!(t.document_frequencies().unwrap().is_empty());
    }

    #[test]
    fn stop_paths_are_purged() {
        let idx = Index::in_memory(IndexConfig::default()).unwrap();
        for i in 0..10 {
            let mut paths = vec![(format!("u{i}"), 1)];
            if i < 7 {
                paths.push(("common".to_string(), 2));
            }
            let refs: Vec<(&str, u64)> = paths.iter().map(|(s, n)| (s.as_str(), *n)).collect();
            idx.index_model(IndexDoc::new(format!("m{i}"), "uml", bag(&refs))).unwrap();
        }
        let report = idx.process_stop_paths("uml").unwrap();
        assert_eq!(report.stop_paths, 1);
        assert_eq!(report.removed_occurrences, 14);
        let t = idx.table("uml").unwrap();
        assert!(!t.document_frequencies().unwrap().contains_key(&path("common", "State")));
        assert_eq!(t.avdl(), 1.0);
        assert_eq!(t.totals().unwrap()["m0"], 1);
        // later models are filtered with the existing set
        idx.index_model(IndexDoc::new("late", "uml", bag(&[("common", 1), ("x", 1)])))
            .unwrap();
        let t = idx.table("uml").unwrap();
        assert_eq!(t.totals().unwrap()["late"], 1);
    }

    #[test]
    fn batch_is_atomic() {
        let idx = Index::in_memory(IndexConfig::default()).unwrap();
        let bad: BagOfPaths = [(PathString::singleton(VertexLabel::attr("x")), 1)]
            .into_iter()
            .collect::<BagOfPaths>()
            .mark_normalized();
        let err = idx.index_batch(vec![
            IndexDoc::new("ok", "uml", bag(&[("a", 1)])),
            IndexDoc::new("bad", "uml", bad),
        ]);
        assert!(err.is_err());
        assert!(idx.table("uml").is_err());
    }

    #[test]
    fn pair_keys_decode() {
        let p = PathString::alternating(
            [VertexLabel::attr("a,b"), VertexLabel::class("C"), VertexLabel::class("D")],
            ["n", "r"],
        );
        assert_eq!(decode_pair(&encode_pair(&split_path(&p).unwrap())).unwrap(), p);
    }

    #[test]
    fn model_type_names_are_restricted() {
        assert!(check_model_type("ecore").is_ok());
        assert!(check_model_type("uml-2.5").is_ok());
        assert!(check_model_type("").is_err());
        assert!(check_model_type("a/b").is_err());
    }
}
