//! Checkpointed, concurrent batch execution.
//!
//! Up to `inflight` batches run against the backend at once; completed
//! results enter a reorder buffer and commit to the shard writer strictly
//! in batch-plan order, so the output store is deterministic no matter
//! how completion interleaves. Every completed batch is journaled before
//! commit; a re-run skips journaled batches and produces a bit-identical
//! store.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Mutex;

use serde::Serialize;
use xxhash_rust::xxh64::Xxh64;

use crate::model::{AnnotationText, EmbeddingVector};
use crate::store::{Dtype, KeyKind, Manifest, ShardWriter};

use super::journal::Journal;
use super::{check_alignment, plan_batches, BatchLimits, BatchPlan, EmbedBackend, EmbedError};

/// Options for one embedding run.
#[derive(Debug, Clone)]
pub struct EmbedRunOptions {
    pub limits: BatchLimits,
    /// Concurrent batches in flight (>= 1).
    pub inflight: usize,
    /// Checkpoint journal path; None disables checkpointing.
    pub journal_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub records_per_shard: u64,
    pub dtype: Dtype,
    /// Unit-normalize vectors at store time. Off by default: backends
    /// return native vectors and the store keeps them as-is.
    pub normalize: bool,
}

/// Outcome of an embedding run.
#[derive(Debug, Clone, Serialize)]
pub struct EmbedRunReport {
    pub batches_total: usize,
    pub batches_from_journal: usize,
    pub batches_executed: usize,
    pub oversize_batches: usize,
    pub records: u64,
    pub model_id: String,
    pub dim: usize,
}

/// Fingerprint of (plan, backend identity) pinning what a journal may
/// resume.
fn plan_fingerprint(plan: &BatchPlan, model_id: &str, dim: usize) -> String {
    let mut hasher = Xxh64::new(0);
    hasher.update(model_id.as_bytes());
    hasher.update(&(dim as u64).to_le_bytes());
    hasher.update(&(plan.limits.max_items as u64).to_le_bytes());
    hasher.update(&plan.limits.max_tokens.to_le_bytes());
    for batch in &plan.batches {
        for (key, text) in &batch.items {
            hasher.update(key.as_bytes());
            hasher.update(&[0]);
            hasher.update(&(text.len() as u64).to_le_bytes());
        }
        hasher.update(&[0xFF]);
    }
    format!("{:016x}", hasher.digest())
}

/// Plan, embed, journal, and write the store. Annotations must arrive in
/// canonical key order (the order the annotate stage emits); the shard
/// writer enforces it.
pub fn run_embedding(
    annotations: Vec<AnnotationText>,
    backend: &dyn EmbedBackend,
    opts: &EmbedRunOptions,
) -> Result<EmbedRunReport, EmbedError> {
    assert!(opts.inflight >= 1, "inflight must be >= 1");
    let model_id = backend.model_id();
    let dim = backend.dim();
    let plan = plan_batches(annotations, opts.limits);
    let fingerprint = plan_fingerprint(&plan, &model_id, dim);

    let (mut journal, completed) = match &opts.journal_path {
        Some(path) => {
            let (journal, completed) = Journal::open_or_create(path, &fingerprint)?;
            (Some(journal), completed)
        }
        None => (None, BTreeMap::new()),
    };
    let batches_from_journal = completed
        .keys()
        .filter(|idx| **idx < plan.batches.len())
        .count();

    // Reorder buffer starts pre-populated with journaled batches.
    let mut buffer: BTreeMap<usize, Vec<(String, EmbeddingVector)>> = BTreeMap::new();
    for (idx, items) in completed {
        if idx >= plan.batches.len() {
            return Err(EmbedError::Journal(format!(
                "journal holds batch {idx} beyond the plan ({} batches)",
                plan.batches.len()
            )));
        }
        let restored = items
            .into_iter()
            .map(|(key, values)| {
                EmbeddingVector::new(values, model_id.clone())
                    .map(|v| (key, v))
                    .map_err(|e| EmbedError::Journal(format!("journaled vector invalid: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let batch = &plan.batches[idx];
        check_alignment(&batch.items, &restored, dim)?;
        buffer.insert(idx, restored);
    }

    let pending: Vec<usize> = (0..plan.batches.len())
        .filter(|idx| !buffer.contains_key(idx))
        .collect();
    let batches_executed = pending.len();

    let mut writer = ShardWriter::create(
        &opts.out_dir,
        opts.records_per_shard,
        opts.dtype,
        KeyKind::Variant,
    )?;
    let mut next_commit = 0usize;
    let mut records = 0u64;

    let normalize = opts.normalize;
    let commit_ready = |buffer: &mut BTreeMap<usize, Vec<(String, EmbeddingVector)>>,
                        writer: &mut ShardWriter,
                        next_commit: &mut usize,
                        records: &mut u64|
     -> Result<(), EmbedError> {
        while let Some(items) = buffer.remove(next_commit) {
            for (key, vector) in items {
                let vector = if normalize {
                    unit_normalized(vector)
                } else {
                    vector
                };
                writer.push(&key, &vector)?;
                *records += 1;
            }
            *next_commit += 1;
        }
        Ok(())
    };

    if !pending.is_empty() {
        let cursor = AtomicUsize::new(0);
        let (tx, rx) =
            mpsc::channel::<(usize, Result<Vec<(String, EmbeddingVector)>, EmbedError>)>();
        let journal_slot = Mutex::new(journal.take());

        std::thread::scope(|scope| -> Result<(), EmbedError> {
            let workers = opts.inflight.min(pending.len());
            for _ in 0..workers {
                let tx = tx.clone();
                let cursor = &cursor;
                let pending = &pending;
                let plan = &plan;
                scope.spawn(move || loop {
                    let slot = cursor.fetch_add(1, Ordering::SeqCst);
                    if slot >= pending.len() {
                        break;
                    }
                    let idx = pending[slot];
                    let batch = &plan.batches[idx];
                    let result = backend.embed_batch(&batch.items).and_then(|out| {
                        check_alignment(&batch.items, &out, dim)?;
                        Ok(out)
                    });
                    if tx.send((idx, result)).is_err() {
                        break; // receiver gone: run is aborting
                    }
                });
            }
            drop(tx);

            let mut first_error: Option<EmbedError> = None;
            for (idx, result) in rx {
                match result {
                    Ok(items) => {
                        if let Some(journal) = journal_slot.lock().expect("journal lock").as_mut() {
                            journal.append(idx, &items)?;
                        }
                        if first_error.is_none() {
                            buffer.insert(idx, items);
                            commit_ready(&mut buffer, &mut writer, &mut next_commit, &mut records)?;
                        }
                    }
                    Err(e) => {
                        // Keep draining so workers can finish and journal
                        // their successes; fail the run afterwards.
                        cursor.store(pending.len(), Ordering::SeqCst);
                        if first_error.is_none() {
                            first_error = Some(e);
                        }
                    }
                }
            }
            match first_error {
                Some(e) => Err(e),
                None => Ok(()),
            }
        })?;
        journal = journal_slot.into_inner().expect("journal lock");
    }

    commit_ready(&mut buffer, &mut writer, &mut next_commit, &mut records)?;
    if next_commit != plan.batches.len() {
        return Err(EmbedError::Journal(format!(
            "committed {next_commit} of {} batches",
            plan.batches.len()
        )));
    }
    drop(journal);

    let manifest: Manifest = writer.finish(&model_id)?;
    Ok(EmbedRunReport {
        batches_total: plan.batches.len(),
        batches_from_journal,
        batches_executed,
        oversize_batches: plan.oversize_count(),
        records: manifest.record_count,
        model_id,
        dim,
    })
}

fn unit_normalized(vector: EmbeddingVector) -> EmbeddingVector {
    let model_id = vector.model_id().to_string();
    let values = vector.into_values();
    let norm = values
        .iter()
        .map(|v| (*v as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return EmbeddingVector::new(values, model_id).expect("unchanged vector stays valid");
    }
    let scaled: Vec<f32> = values.iter().map(|v| (*v as f64 / norm) as f32).collect();
    EmbeddingVector::new(scaled, model_id).expect("finite by construction")
}

/// Cost estimate: tokens times the per-token unit price, the linear
/// batched-API arithmetic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostEstimate {
    pub total_tokens: u64,
    pub price_per_million_tokens: f64,
    pub estimated_cost: f64,
}

pub fn cost_estimate(total_tokens: u64, price_per_million_tokens: f64) -> CostEstimate {
    let unit_price = price_per_million_tokens / 1_000_000.0;
    CostEstimate {
        total_tokens,
        price_per_million_tokens,
        estimated_cost: total_tokens as f64 * unit_price,
    }
}
