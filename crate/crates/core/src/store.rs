//! Sharded binary embedding store.
//!
//! On-disk layout: `<dir>/manifest.json` plus `shard-00000.bin`,
//! `shard-00001.bin`, ... Each shard holds fixed-length records in
//! canonical key order: a 32-byte NUL-padded ASCII key field followed by
//! `dim` values little-endian in the store dtype. Fixed-width records
//! keep offset arithmetic O(1) and shards binary-searchable; keys longer
//! than 32 bytes (long indel alleles) spill to a per-shard side table in
//! the manifest.
//!
//! The manifest is written last via atomic rename, so a crashed writer
//! never leaves something that looks like a complete store. Shard
//! checksums (xxh64) are verified lazily on the first open of each
//! shard; a truncated or corrupted shard surfaces as `ChecksumError`,
//! never as silently wrong data.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh64::Xxh64;

use crate::model::{EmbeddingVector, VariantKey};

pub const KEY_FIELD_LEN: usize = 32;
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_RECORDS_PER_SHARD: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("store input not sorted: {1} does not follow {0}")]
    UnsortedInput(String, String),
    #[error("dimension mismatch: store dim {expected}, vector dim {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("model mismatch: store model {expected:?}, vector model {got:?}")]
    ModelMismatch { expected: String, got: String },
    #[error("checksum mismatch in shard {0} (corrupted or truncated)")]
    ChecksumError(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("key {0:?} is not valid for a {1:?}-keyed store")]
    BadKey(String, KeyKind),
}

/// Stored value precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F16,
}

impl Dtype {
    pub fn byte_len(&self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }
}

/// What the record keys are, which fixes their ordering: variant keys
/// sort canonically (chromosome rank, position, ref, alt); sample ids
/// sort lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyKind {
    Variant,
    Sample,
}

/// Ordering-normalized form of a key under a [`KeyKind`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SortKey {
    Variant(VariantKey),
    Sample(String),
}

impl KeyKind {
    fn sort_key(&self, key: &str) -> Result<SortKey, StoreError> {
        match self {
            KeyKind::Variant => key
                .parse::<VariantKey>()
                .map(SortKey::Variant)
                .map_err(|_| StoreError::BadKey(key.to_string(), *self)),
            KeyKind::Sample => Ok(SortKey::Sample(key.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardEntry {
    pub file_name: String,
    pub first_key: String,
    pub last_key: String,
    pub count: u64,
    /// xxh64 of the shard file bytes, hex.
    pub checksum: String,
    /// Side table for keys longer than the fixed key field:
    /// (record index within shard, full key).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub long_keys: Vec<(u64, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub model_id: String,
    pub dim: u32,
    pub dtype: Dtype,
    pub key_kind: KeyKind,
    pub record_count: u64,
    pub shards: Vec<ShardEntry>,
}

impl Manifest {
    pub fn record_len(&self) -> usize {
        KEY_FIELD_LEN + self.dim as usize * self.dtype.byte_len()
    }

    /// Structural invariants: shard ranges ascending and disjoint, counts
    /// summing to the record count.
    pub fn validate(&self, key_kind_orders: bool) -> Result<(), StoreError> {
        if self.version != MANIFEST_VERSION {
            return Err(StoreError::Manifest(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        let total: u64 = self.shards.iter().map(|s| s.count).sum();
        if total != self.record_count {
            return Err(StoreError::Manifest(format!(
                "shard counts sum to {total}, manifest says {}",
                self.record_count
            )));
        }
        if key_kind_orders {
            let mut prev: Option<SortKey> = None;
            for shard in &self.shards {
                let first = self.key_kind.sort_key(&shard.first_key)?;
                let last = self.key_kind.sort_key(&shard.last_key)?;
                if last < first {
                    return Err(StoreError::Manifest(format!(
                        "shard {} range is inverted",
                        shard.file_name
                    )));
                }
                if let Some(p) = &prev {
                    if first <= *p {
                        return Err(StoreError::Manifest(format!(
                            "shard {} overlaps the previous shard",
                            shard.file_name
                        )));
                    }
                }
                prev = Some(last);
            }
        }
        Ok(())
    }
}

fn encode_key_field(key: &str) -> [u8; KEY_FIELD_LEN] {
    let mut field = [0u8; KEY_FIELD_LEN];
    let bytes = key.as_bytes();
    let n = bytes.len().min(KEY_FIELD_LEN);
    field[..n].copy_from_slice(&bytes[..n]);
    field
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

struct OpenShard {
    file: BufWriter<File>,
    hasher: Xxh64,
    path: PathBuf,
    file_name: String,
    first_key: String,
    last_key: String,
    count: u64,
    long_keys: Vec<(u64, String)>,
}

/// Streams key-sorted records into fixed-record shard files and publishes
/// the manifest last.
pub struct ShardWriter {
    dir: PathBuf,
    records_per_shard: u64,
    dtype: Dtype,
    key_kind: KeyKind,
    model_id: Option<String>,
    dim: Option<usize>,
    shards: Vec<ShardEntry>,
    current: Option<OpenShard>,
    prev_key: Option<(SortKey, String)>,
    record_count: u64,
}

impl ShardWriter {
    pub fn create(
        dir: impl AsRef<Path>,
        records_per_shard: u64,
        dtype: Dtype,
        key_kind: KeyKind,
    ) -> Result<Self, StoreError> {
        assert!(records_per_shard > 0, "records_per_shard must be positive");
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        Ok(ShardWriter {
            dir,
            records_per_shard,
            dtype,
            key_kind,
            model_id: None,
            dim: None,
            shards: Vec::new(),
            current: None,
            prev_key: None,
            record_count: 0,
        })
    }

    pub fn push(&mut self, key: &str, vector: &EmbeddingVector) -> Result<(), StoreError> {
        let sort_key = self.key_kind.sort_key(key)?;
        if let Some((prev, prev_str)) = &self.prev_key {
            if sort_key <= *prev {
                return Err(StoreError::UnsortedInput(prev_str.clone(), key.to_string()));
            }
        }
        match (&self.dim, &self.model_id) {
            (None, None) => {
                self.dim = Some(vector.dim());
                self.model_id = Some(vector.model_id().to_string());
            }
            (Some(dim), Some(model)) => {
                if *dim != vector.dim() {
                    return Err(StoreError::DimMismatch {
                        expected: *dim,
                        got: vector.dim(),
                    });
                }
                if model != vector.model_id() {
                    return Err(StoreError::ModelMismatch {
                        expected: model.clone(),
                        got: vector.model_id().to_string(),
                    });
                }
            }
            _ => unreachable!("dim and model_id are set together"),
        }

        if self
            .current
            .as_ref()
            .is_none_or(|s| s.count >= self.records_per_shard)
        {
            self.roll_shard()?;
        }
        let shard = self.current.as_mut().expect("rolled above");

        let mut record = Vec::with_capacity(KEY_FIELD_LEN + vector.dim() * self.dtype.byte_len());
        record.extend_from_slice(&encode_key_field(key));
        match self.dtype {
            Dtype::F32 => {
                for v in vector.values() {
                    record.extend_from_slice(&v.to_le_bytes());
                }
            }
            Dtype::F16 => {
                for v in vector.values() {
                    record.extend_from_slice(&half::f16::from_f32(*v).to_le_bytes());
                }
            }
        }
        shard.file.write_all(&record)?;
        shard.hasher.update(&record);
        if key.len() > KEY_FIELD_LEN {
            shard.long_keys.push((shard.count, key.to_string()));
        }
        if shard.count == 0 {
            shard.first_key = key.to_string();
        }
        shard.last_key = key.to_string();
        shard.count += 1;
        self.record_count += 1;
        self.prev_key = Some((sort_key, key.to_string()));
        Ok(())
    }

    fn roll_shard(&mut self) -> Result<(), StoreError> {
        self.seal_current()?;
        let file_name = format!("shard-{:05}.bin", self.shards.len());
        let path = self.dir.join(&file_name);
        let file = BufWriter::new(File::create(&path)?);
        self.current = Some(OpenShard {
            file,
            hasher: Xxh64::new(0),
            path,
            file_name,
            first_key: String::new(),
            last_key: String::new(),
            count: 0,
            long_keys: Vec::new(),
        });
        Ok(())
    }

    fn seal_current(&mut self) -> Result<(), StoreError> {
        if let Some(mut shard) = self.current.take() {
            shard.file.flush()?;
            shard.file.get_ref().sync_all()?;
            if shard.count == 0 {
                std::fs::remove_file(&shard.path)?;
                return Ok(());
            }
            self.shards.push(ShardEntry {
                file_name: shard.file_name,
                first_key: shard.first_key,
                last_key: shard.last_key,
                count: shard.count,
                checksum: format!("{:016x}", shard.hasher.digest()),
                long_keys: shard.long_keys,
            });
        }
        Ok(())
    }

    /// Seal the open shard and publish the manifest via atomic rename.
    pub fn finish(mut self, model_id_if_empty: &str) -> Result<Manifest, StoreError> {
        self.seal_current()?;
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            model_id: self
                .model_id
                .unwrap_or_else(|| model_id_if_empty.to_string()),
            dim: self.dim.unwrap_or(0) as u32,
            dtype: self.dtype,
            key_kind: self.key_kind,
            record_count: self.record_count,
            shards: self.shards,
        };
        let tmp = self.dir.join("manifest.json.tmp");
        {
            let mut f = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer_pretty(&mut f, &manifest)
                .map_err(|e| StoreError::Manifest(e.to_string()))?;
            f.write_all(b"\n")?;
            f.flush()?;
            f.get_ref().sync_all()?;
        }
        std::fs::rename(&tmp, self.dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

/// Write a key-sorted record stream into a new store directory.
pub fn write_shards(
    records: impl IntoIterator<Item = (String, EmbeddingVector)>,
    out_dir: impl AsRef<Path>,
    records_per_shard: u64,
    dtype: Dtype,
    key_kind: KeyKind,
) -> Result<Manifest, StoreError> {
    let mut writer = ShardWriter::create(out_dir, records_per_shard, dtype, key_kind)?;
    for (key, vector) in records {
        writer.push(&key, &vector)?;
    }
    writer.finish("unknown")
}

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

struct ShardHandle {
    file: File,
    count: u64,
    long_keys: std::collections::HashMap<u64, String>,
}

/// Read handle over a published store. Shards are opened and
/// checksum-verified lazily on first access; an opened store is immutable
/// and safe to share across threads.
pub struct EmbeddingStore {
    dir: PathBuf,
    manifest: Manifest,
    handles: Vec<Mutex<Option<Arc<ShardHandle>>>>,
}

impl EmbeddingStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(StoreError::Manifest(format!(
                "no manifest at {}",
                manifest_path.display()
            )));
        }
        let text = std::fs::read_to_string(&manifest_path)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| StoreError::Manifest(e.to_string()))?;
        manifest.validate(true)?;
        let handles = (0..manifest.shards.len())
            .map(|_| Mutex::new(None))
            .collect();
        Ok(EmbeddingStore {
            dir,
            manifest,
            handles,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim as usize
    }

    pub fn model_id(&self) -> &str {
        &self.manifest.model_id
    }

    pub fn len(&self) -> u64 {
        self.manifest.record_count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.record_count == 0
    }

    /// Open a shard, verifying its checksum and length on first access.
    fn shard(&self, idx: usize) -> Result<Arc<ShardHandle>, StoreError> {
        let mut slot = self.handles[idx].lock().expect("shard lock");
        if let Some(handle) = slot.as_ref() {
            return Ok(Arc::clone(handle));
        }
        let entry = &self.manifest.shards[idx];
        let path = self.dir.join(&entry.file_name);
        let mut file = File::open(&path)?;
        let mut hasher = Xxh64::new(0);
        let mut buf = vec![0u8; 1 << 20];
        let mut total = 0u64;
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            total += n as u64;
        }
        let expected_len = entry.count * self.manifest.record_len() as u64;
        if total != expected_len || format!("{:016x}", hasher.digest()) != entry.checksum {
            return Err(StoreError::ChecksumError(entry.file_name.clone()));
        }
        let handle = Arc::new(ShardHandle {
            file,
            count: entry.count,
            long_keys: entry.long_keys.iter().cloned().collect(),
        });
        *slot = Some(Arc::clone(&handle));
        Ok(handle)
    }

    fn read_record(
        &self,
        handle: &ShardHandle,
        record_idx: u64,
    ) -> Result<(String, EmbeddingVector), StoreError> {
        let record_len = self.manifest.record_len();
        let mut buf = vec![0u8; record_len];
        handle
            .file
            .read_exact_at(&mut buf, record_idx * record_len as u64)?;
        let key = match handle.long_keys.get(&record_idx) {
            Some(full) => full.clone(),
            None => {
                let end = buf[..KEY_FIELD_LEN]
                    .iter()
                    .position(|&b| b == 0)
                    .unwrap_or(KEY_FIELD_LEN);
                String::from_utf8(buf[..end].to_vec())
                    .map_err(|_| StoreError::Corrupt("non-UTF-8 key field".into()))?
            }
        };
        let mut values = Vec::with_capacity(self.manifest.dim as usize);
        let body = &buf[KEY_FIELD_LEN..];
        match self.manifest.dtype {
            Dtype::F32 => {
                for chunk in body.chunks_exact(4) {
                    values.push(f32::from_le_bytes(chunk.try_into().expect("chunk of 4")));
                }
            }
            Dtype::F16 => {
                for chunk in body.chunks_exact(2) {
                    let bits = u16::from_le_bytes(chunk.try_into().expect("chunk of 2"));
                    values.push(half::f16::from_bits(bits).to_f32());
                }
            }
        }
        let vector = EmbeddingVector::new(values, self.manifest.model_id.clone())
            .map_err(|e| StoreError::Corrupt(format!("stored vector invalid: {e}")))?;
        Ok((key, vector))
    }

    /// Exact-key lookup: binary search over shard ranges, then over the
    /// fixed records within the shard. A miss is `Ok(None)`.
    pub fn get(&self, key: &str) -> Result<Option<EmbeddingVector>, StoreError> {
        let target = self.manifest.key_kind.sort_key(key)?;
        // Shards are disjoint and ascending: find the first shard whose
        // last_key >= target.
        let mut lo = 0usize;
        let mut hi = self.manifest.shards.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            let last = self
                .manifest
                .key_kind
                .sort_key(&self.manifest.shards[mid].last_key)?;
            if last < target {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == self.manifest.shards.len() {
            return Ok(None);
        }
        let first = self
            .manifest
            .key_kind
            .sort_key(&self.manifest.shards[lo].first_key)?;
        if target < first {
            return Ok(None);
        }

        let handle = self.shard(lo)?;
        let mut lo_rec = 0u64;
        let mut hi_rec = handle.count;
        while lo_rec < hi_rec {
            let mid = (lo_rec + hi_rec) / 2;
            let (mid_key, vector) = self.read_record(&handle, mid)?;
            let mid_sort = self.manifest.key_kind.sort_key(&mid_key)?;
            match mid_sort.cmp(&target) {
                std::cmp::Ordering::Equal => return Ok(Some(vector)),
                std::cmp::Ordering::Less => lo_rec = mid + 1,
                std::cmp::Ordering::Greater => hi_rec = mid,
            }
        }
        Ok(None)
    }

    /// Lookup by variant key (variant-keyed stores).
    pub fn get_variant(&self, key: &VariantKey) -> Result<Option<EmbeddingVector>, StoreError> {
        self.get(&key.to_string())
    }

    /// Ordered scan of records with keys in `[start, end]` (both optional
    /// and inclusive). Streaming: one record is materialized at a time.
    pub fn scan(&self, start: Option<&str>, end: Option<&str>) -> Result<ScanIter<'_>, StoreError> {
        let start_key = start
            .map(|k| self.manifest.key_kind.sort_key(k))
            .transpose()?;
        let end_key = end
            .map(|k| self.manifest.key_kind.sort_key(k))
            .transpose()?;
        Ok(ScanIter {
            store: self,
            shard_idx: 0,
            record_idx: 0,
            handle: None,
            start: start_key,
            end: end_key,
            done: false,
        })
    }

    /// Re-verify every shard checksum plus the manifest invariants.
    pub fn verify(&self) -> Result<VerifyReport, StoreError> {
        self.manifest.validate(true)?;
        let mut shards_ok = 0usize;
        for idx in 0..self.manifest.shards.len() {
            self.shard(idx)?;
            shards_ok += 1;
        }
        Ok(VerifyReport {
            record_count: self.manifest.record_count,
            shards_ok,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub record_count: u64,
    pub shards_ok: usize,
}

/// Streaming iterator over an ordered key range.
pub struct ScanIter<'a> {
    store: &'a EmbeddingStore,
    shard_idx: usize,
    record_idx: u64,
    handle: Option<Arc<ShardHandle>>,
    start: Option<SortKey>,
    end: Option<SortKey>,
    done: bool,
}

impl Iterator for ScanIter<'_> {
    type Item = Result<(String, EmbeddingVector), StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            if self.shard_idx >= self.store.manifest.shards.len() {
                self.done = true;
                return None;
            }
            // Skip shards entirely before the range start.
            if let Some(start) = &self.start {
                let entry = &self.store.manifest.shards[self.shard_idx];
                match self.store.manifest.key_kind.sort_key(&entry.last_key) {
                    Ok(last) if last < *start => {
                        self.shard_idx += 1;
                        self.handle = None;
                        self.record_idx = 0;
                        continue;
                    }
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                    _ => {}
                }
            }
            if self.handle.is_none() {
                match self.store.shard(self.shard_idx) {
                    Ok(h) => self.handle = Some(h),
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                }
            }
            let handle = self.handle.as_ref().expect("opened above");
            if self.record_idx >= handle.count {
                self.shard_idx += 1;
                self.handle = None;
                self.record_idx = 0;
                continue;
            }
            let handle = Arc::clone(handle);
            let record = self.store.read_record(&handle, self.record_idx);
            self.record_idx += 1;
            match record {
                Ok((key, vector)) => {
                    let sort_key = match self.store.manifest.key_kind.sort_key(&key) {
                        Ok(k) => k,
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    };
                    if let Some(start) = &self.start {
                        if sort_key < *start {
                            continue;
                        }
                    }
                    if let Some(end) = &self.end {
                        if sort_key > *end {
                            self.done = true;
                            return None;
                        }
                    }
                    return Some(Ok((key, vector)));
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Interchange: JSONL and TSV export, JSONL import
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ExportRow {
    key: String,
    vec: Vec<f32>,
}

/// Export every record as JSON lines `{"key": ..., "vec": [...]}`.
pub fn export_jsonl(store: &EmbeddingStore, out: impl Write) -> Result<u64, StoreError> {
    let mut out = BufWriter::new(out);
    let mut n = 0u64;
    for record in store.scan(None, None)? {
        let (key, vector) = record?;
        let row = ExportRow {
            key,
            vec: vector.into_values(),
        };
        serde_json::to_writer(&mut out, &row).map_err(|e| StoreError::Manifest(e.to_string()))?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

/// Export every record as TSV: key, then one column per dimension.
pub fn export_tsv(store: &EmbeddingStore, out: impl Write) -> Result<u64, StoreError> {
    let mut out = BufWriter::new(out);
    let mut n = 0u64;
    for record in store.scan(None, None)? {
        let (key, vector) = record?;
        out.write_all(key.as_bytes())?;
        for v in vector.values() {
            write!(out, "\t{v}")?;
        }
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

/// Import a JSONL export into a new store directory. Rows are sorted by
/// the key kind's ordering before writing.
pub fn import_jsonl(
    input: impl io::BufRead,
    out_dir: impl AsRef<Path>,
    records_per_shard: u64,
    dtype: Dtype,
    key_kind: KeyKind,
    model_id: &str,
) -> Result<Manifest, StoreError> {
    let mut rows: Vec<(SortKey, String, Vec<f32>)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ExportRow = serde_json::from_str(&line)
            .map_err(|e| StoreError::Manifest(format!("line {}: {e}", i + 1)))?;
        let sort_key = key_kind.sort_key(&row.key)?;
        rows.push((sort_key, row.key, row.vec));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let records = rows.into_iter().map(|(_, key, values)| {
        let vector = EmbeddingVector::new(values, model_id.to_string())
            .expect("import rows hold finite non-empty vectors");
        (key, vector)
    });
    write_shards(records, out_dir, records_per_shard, dtype, key_kind)
}
