//! Ordered key-value storage behind the index.
//!
//! Cells are addressed by `(table, row, qualifier)` and kept sorted
//! bytewise. [`KvStore`] is an embedded engine: the whole map lives in memory
//! and every write batch is appended to a checksummed log that is replayed on
//! open. Readers work on immutable snapshots, so a query never sees half of a
//! batch.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use super::codec::{CodecError, Reader, Writer};

pub type Columns = BTreeMap<Vec<u8>, Vec<u8>>;
type Table = BTreeMap<Vec<u8>, Columns>;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("storage log is corrupt: {0}")]
    Corrupt(#[from] CodecError),
    #[error("store is open read-only")]
    ReadOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    Put {
        table: String,
        row: Vec<u8>,
        qualifier: Vec<u8>,
        value: Vec<u8>,
    },
    Delete {
        table: String,
        row: Vec<u8>,
        qualifier: Vec<u8>,
    },
    DeleteRow {
        table: String,
        row: Vec<u8>,
    },
    DropTable {
        table: String,
    },
}

/// Mutations applied all together or not at all.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriteBatch {
    pub ops: Vec<Mutation>,
}

impl WriteBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, table: &str, row: &[u8], qualifier: &[u8], value: Vec<u8>) {
        self.ops.push(Mutation::Put {
            table: table.to_string(),
            row: row.to_vec(),
            qualifier: qualifier.to_vec(),
            value,
        });
    }

    pub fn delete(&mut self, table: &str, row: &[u8], qualifier: &[u8]) {
        self.ops.push(Mutation::Delete {
            table: table.to_string(),
            row: row.to_vec(),
            qualifier: qualifier.to_vec(),
        });
    }

    pub fn delete_row(&mut self, table: &str, row: &[u8]) {
        self.ops.push(Mutation::DeleteRow {
            table: table.to_string(),
            row: row.to_vec(),
        });
    }

    pub fn drop_table(&mut self, table: &str) {
        self.ops.push(Mutation::DropTable {
            table: table.to_string(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.varint(self.ops.len() as u64);
        for op in &self.ops {
            match op {
                Mutation::Put {
                    table,
                    row,
                    qualifier,
                    value,
                } => {
                    w.u8(0);
                    w.bytes(table.as_bytes());
                    w.bytes(row);
                    w.bytes(qualifier);
                    w.bytes(value);
                }
                Mutation::Delete {
                    table,
                    row,
                    qualifier,
                } => {
                    w.u8(1);
                    w.bytes(table.as_bytes());
                    w.bytes(row);
                    w.bytes(qualifier);
                }
                Mutation::DeleteRow { table, row } => {
                    w.u8(2);
                    w.bytes(table.as_bytes());
                    w.bytes(row);
                }
                Mutation::DropTable { table } => {
                    w.u8(3);
                    w.bytes(table.as_bytes());
                }
            }
        }
        w.buf
    }

    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let n = r.varint()?;
        let mut ops = Vec::new();
        for _ in 0..n {
            let tag = r.u8()?;
            let table = r.string()?;
            let op = match tag {
                0 => Mutation::Put {
                    table,
                    row: r.bytes()?.to_vec(),
                    qualifier: r.bytes()?.to_vec(),
                    value: r.bytes()?.to_vec(),
                },
                1 => Mutation::Delete {
                    table,
                    row: r.bytes()?.to_vec(),
                    qualifier: r.bytes()?.to_vec(),
                },
                2 => Mutation::DeleteRow {
                    table,
                    row: r.bytes()?.to_vec(),
                },
                3 => Mutation::DropTable { table },
                t => return Err(CodecError(format!("unknown mutation tag {t}"))),
            };
            ops.push(op);
        }
        r.finish()?;
        Ok(WriteBatch { ops })
    }
}

/// The full contents of a store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tables(BTreeMap<String, Table>);

impl Tables {
    fn apply(&mut self, batch: &WriteBatch) {
        for op in &batch.ops {
            match op {
                Mutation::Put {
                    table,
                    row,
                    qualifier,
                    value,
                } => {
                    self.0
                        .entry(table.clone())
                        .or_default()
                        .entry(row.clone())
                        .or_default()
                        .insert(qualifier.clone(), value.clone());
                }
                Mutation::Delete {
                    table,
                    row,
                    qualifier,
                } => {
                    if let Some(t) = self.0.get_mut(table) {
                        if let Some(cols) = t.get_mut(row) {
                            cols.remove(qualifier);
                            if cols.is_empty() {
                                t.remove(row);
                            }
                        }
                    }
                }
                Mutation::DeleteRow { table, row } => {
                    if let Some(t) = self.0.get_mut(table) {
                        t.remove(row);
                    }
                }
                Mutation::DropTable { table } => {
                    self.0.remove(table);
                }
            }
        }
        self.0.retain(|_, t| !t.is_empty());
    }

    fn to_batch(&self) -> WriteBatch {
        let mut b = WriteBatch::new();
        for (name, table) in &self.0 {
            for (row, cols) in table {
                for (q, v) in cols {
                    b.put(name, row, q, v.clone());
                }
            }
        }
        b
    }
}

/// An immutable view of the store at one point in time.
pub trait StoreSnapshot: Send + Sync {
    /// Read one row. `columns = None` reads the whole row; otherwise only the
    /// listed qualifiers that exist are returned. Each call is one round trip.
    fn get(&self, table: &str, row: &[u8], columns: Option<&[&[u8]]>) -> Result<Columns, StoreError>;

    /// Visit every cell of `table` in key order until `f` returns false.
    fn scan(
        &self,
        table: &str,
        f: &mut dyn FnMut(&[u8], &[u8], &[u8]) -> bool,
    ) -> Result<(), StoreError>;

    /// Table names in order.
    fn tables(&self) -> Vec<String>;
}

/// An ordered store that can be read through snapshots and written in
/// atomic batches.
pub trait OrderedStore: Send + Sync {
    fn snapshot(&self) -> Arc<dyn StoreSnapshot>;
    fn write(&self, batch: WriteBatch) -> Result<(), StoreError>;
    /// Number of `get` calls served so far, across all snapshots.
    fn get_count(&self) -> u64;
}

struct MemSnapshot {
    data: Arc<Tables>,
    gets: Arc<AtomicU64>,
}

impl StoreSnapshot for MemSnapshot {
    fn get(&self, table: &str, row: &[u8], columns: Option<&[&[u8]]>) -> Result<Columns, StoreError> {
        self.gets.fetch_add(1, Ordering::Relaxed);
        let Some(cols) = self.data.0.get(table).and_then(|t| t.get(row)) else {
            return Ok(Columns::new());
        };
        Ok(match columns {
            None => cols.clone(),
            Some(wanted) => wanted
                .iter()
                .filter_map(|q| cols.get_key_value(*q))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        })
    }

    fn scan(
        &self,
        table: &str,
        f: &mut dyn FnMut(&[u8], &[u8], &[u8]) -> bool,
    ) -> Result<(), StoreError> {
        if let Some(t) = self.data.0.get(table) {
            for (row, cols) in t {
                for (q, v) in cols {
                    if !f(row, q, v) {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    fn tables(&self) -> Vec<String> {
        self.data.0.keys().cloned().collect()
    }
}

const LOG_FILE: &str = "data.log";
const LOG_MAGIC: &[u8; 8] = b"PMKVLOG1";

/// Embedded store: in-memory ordered map plus an append-only batch log.
pub struct KvStore {
    data: RwLock<Arc<Tables>>,
    log: Option<Mutex<File>>,
    dir: Option<PathBuf>,
    read_only: bool,
    gets: Arc<AtomicU64>,
}

impl KvStore {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        KvStore {
            data: RwLock::new(Arc::new(Tables::default())),
            log: None,
            dir: None,
            read_only: false,
            gets: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Open (or create) the store in `dir`, replaying its log. A torn record
    /// at the end of the log, left by a crash mid-write, is discarded.
    pub fn open(dir: &Path, read_only: bool) -> Result<Self, StoreError> {
        let path = dir.join(LOG_FILE);
        if !read_only {
            fs::create_dir_all(dir)?;
        }
        let mut tables = Tables::default();
        let log = if read_only {
            if path.exists() {
                let mut f = File::open(&path)?;
                replay(&mut f, &mut tables)?;
            }
            None
        } else {
            let mut f = OpenOptions::new()
                .read(true)
                .write(true)
                .create(true)
                .truncate(false)
                .open(&path)?;
            let good = replay(&mut f, &mut tables)?;
            f.set_len(good)?;
            f.seek(SeekFrom::End(0))?;
            if good == 0 {
                f.write_all(LOG_MAGIC)?;
                f.sync_data()?;
            }
            Some(Mutex::new(f))
        };
        Ok(KvStore {
            data: RwLock::new(Arc::new(tables)),
            log,
            dir: Some(dir.to_path_buf()),
            read_only,
            gets: Arc::new(AtomicU64::new(0)),
        })
    }

    /// Rewrite the log as a single record holding the current contents.
    pub fn compact(&self) -> Result<(), StoreError> {
        if self.read_only {
            return Err(StoreError::ReadOnly);
        }
        let (Some(dir), Some(log)) = (&self.dir, &self.log) else {
            return Ok(());
        };
        let mut file = log.lock().expect("log lock poisoned");
        let data = self.data.read().expect("store lock poisoned").clone();
        let tmp = dir.join(format!("{LOG_FILE}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(LOG_MAGIC)?;
            f.write_all(&frame(&data.to_batch().encode()))?;
            f.sync_all()?;
        }
        fs::rename(&tmp, dir.join(LOG_FILE))?;
        let mut f = OpenOptions::new().append(true).open(dir.join(LOG_FILE))?;
        f.seek(SeekFrom::End(0))?;
        *file = f;
        Ok(())
    }

    /// Size in bytes of the log file, 0 in memory.
    pub fn log_size(&self) -> u64 {
        self.dir
            .as_ref()
            .and_then(|d| fs::metadata(d.join(LOG_FILE)).ok())
            .map(|m| m.len())
            .unwrap_or(0)
    }
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Apply every intact record; returns the length of the intact prefix.
fn replay(f: &mut File, tables: &mut Tables) -> Result<u64, StoreError> {
    let mut buf = Vec::new();
    f.seek(SeekFrom::Start(0))?;
    f.read_to_end(&mut buf)?;
    if buf.is_empty() {
        return Ok(0);
    }
    if buf.len() < LOG_MAGIC.len() || &buf[..LOG_MAGIC.len()] != LOG_MAGIC {
        return Err(StoreError::Corrupt(CodecError("not a store log".into())));
    }
    let mut pos = LOG_MAGIC.len();
    while pos + 8 <= buf.len() {
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().unwrap());
        let Some(payload) = buf.get(pos + 8..pos + 8 + len) else {
            break;
        };
        if crc32fast::hash(payload) != crc {
            break;
        }
        tables.apply(&WriteBatch::decode(payload)?);
        pos += 8 + len;
    }
    if pos < buf.len() {
        log::warn!("discarding {} bytes of incomplete log", buf.len() - pos);
    }
    Ok(pos as u64)
}

impl OrderedStore for KvStore {
    fn snapshot(&self) -> Arc<dyn StoreSnapshot> {
        Arc::new(MemSnapshot {
            data: self.data.read().expect("store lock poisoned").clone(),
            gets: self.gets.clone(),
        })
    }

    fn write(&self, batch: WriteBatch) -> Result<(), StoreError> {
        if self.read_only {
            return Err(StoreError::ReadOnly);
        }
        if batch.is_empty() {
            return Ok(());
        }
        // the log lock orders writers; the data lock is held only to swap
        let log_guard = self.log.as_ref().map(|l| l.lock().expect("log lock poisoned"));
        if let Some(mut f) = log_guard {
            f.write_all(&frame(&batch.encode()))?;
            f.sync_data()?;
            let mut data = self.data.write().expect("store lock poisoned");
            Arc::make_mut(&mut data).apply(&batch);
        } else {
            let mut data = self.data.write().expect("store lock poisoned");
            Arc::make_mut(&mut data).apply(&batch);
        }
        Ok(())
    }

    fn get_count(&self) -> u64 {
        self.gets.load(Ordering::Relaxed)
    }
}
