//! Checkpoint journal for embedding runs.
//!
//! Each completed batch appends one JSON line holding its index and
//! embeddings, so a re-run resumes after the journaled batches and
//! reproduces a bit-identical store without repeating backend calls.
//! The header pins a fingerprint of the batch plan and backend; resuming
//! against a different plan is an error rather than silent corruption.
//! A torn final line from a crash is truncated away on open.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EmbedError;

const JOURNAL_FORMAT: &str = "varembed-journal";
const JOURNAL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct JournalHeader {
    format: String,
    version: u32,
    plan_fingerprint: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalEntry {
    batch_index: usize,
    items: Vec<JournalItem>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalItem {
    key: String,
    vec: Vec<f32>,
}

/// Embeddings recovered from a journal, keyed by batch index.
pub type CompletedBatches = std::collections::BTreeMap<usize, Vec<(String, Vec<f32>)>>;

/// Append-only journal of completed batches.
pub struct Journal {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl Journal {
    /// Open an existing journal (validating the fingerprint and recovering
    /// completed batches) or create a fresh one.
    pub fn open_or_create(
        path: impl AsRef<Path>,
        plan_fingerprint: &str,
    ) -> Result<(Self, CompletedBatches), EmbedError> {
        let path = path.as_ref().to_path_buf();
        let mut completed = CompletedBatches::new();

        let mut valid_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path)?);
            let mut line = String::new();
            let n = reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                return Err(EmbedError::Journal("journal header is incomplete".into()));
            }
            let header: JournalHeader = serde_json::from_str(&line)
                .map_err(|e| EmbedError::Journal(format!("bad header: {e}")))?;
            if header.format != JOURNAL_FORMAT || header.version != JOURNAL_VERSION {
                return Err(EmbedError::Journal("unsupported journal format".into()));
            }
            if header.plan_fingerprint != plan_fingerprint {
                return Err(EmbedError::Journal(format!(
                    "journal belongs to a different plan (fingerprint {} != {})",
                    header.plan_fingerprint, plan_fingerprint
                )));
            }
            valid_len = n as u64;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                if !line.ends_with('\n') {
                    break; // torn tail from a crash; drop it
                }
                match serde_json::from_str::<JournalEntry>(&line) {
                    Ok(entry) => {
                        completed.insert(
                            entry.batch_index,
                            entry.items.into_iter().map(|i| (i.key, i.vec)).collect(),
                        );
                        valid_len += n as u64;
                    }
                    Err(_) => break, // torn or corrupt tail
                }
            }
            let file = OpenOptions::new().write(true).open(&path)?;
            file.set_len(valid_len)?;
        }

        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if valid_len == 0 {
            let header = JournalHeader {
                format: JOURNAL_FORMAT.to_string(),
                version: JOURNAL_VERSION,
                plan_fingerprint: plan_fingerprint.to_string(),
            };
            let mut line =
                serde_json::to_string(&header).map_err(|e| EmbedError::Journal(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        } else {
            file.seek(SeekFrom::End(0))?;
        }
        Ok((
            Journal {
                path,
                writer: BufWriter::new(file),
            },
            completed,
        ))
    }

    /// Record one completed batch. Flushed to the OS before returning.
    pub fn append(
        &mut self,
        batch_index: usize,
        items: &[(String, crate::model::EmbeddingVector)],
    ) -> Result<(), EmbedError> {
        let entry = JournalEntry {
            batch_index,
            items: items
                .iter()
                .map(|(key, v)| JournalItem {
                    key: key.clone(),
                    vec: v.values().to_vec(),
                })
                .collect(),
        };
        let mut line =
            serde_json::to_string(&entry).map_err(|e| EmbedError::Journal(e.to_string()))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
