//! Individual-level embeddings: dosage-weighted averages of variant
//! embeddings over a cohort genotype matrix.
//!
//! The weighted mean (sum(d*e) / sum(d) over non-missing entries) keeps
//! homozygous-reference genotypes (d = 0) from diluting the signal; an
//! unnormalized weighted-sum mode is exposed for downstream experiments.
//! A variant whose store orientation is flipped relative to the cohort
//! genotypes converts its dosage d to 2 - d before weighting.
//!
//! Accumulation runs in f64 regardless of the store dtype; columns are
//! processed in chunks so peak memory is O(chunk * dim) beyond the
//! output itself.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::VariantKey;
use crate::store::{EmbeddingStore, StoreError};

/// Missing-dosage sentinel in the binary matrix format.
pub const DOSAGE_MISSING: u8 = 255;
const DOSAGE_MAGIC: &[u8; 8] = b"VEDOSAG1";

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("store error: {0}")]
    Store(#[from] StoreError),
    #[error("variant {0} not found in the store (either orientation)")]
    KeyNotInStore(String),
    #[error("all dosages are zero or missing after applying the policy")]
    AllZeroDosage,
    #[error("dosage matrix format error: {0}")]
    Format(String),
    #[error("dosage row has {got} entries, expected {expected}")]
    RowShape { expected: usize, got: usize },
}

/// How missing dosages enter the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Exclude missing entries from numerator and denominator.
    Skip,
    /// Treat missing as homozygous reference (dosage 0).
    Zero,
}

impl MissingPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "skip" => Some(MissingPolicy::Skip),
            "zero" => Some(MissingPolicy::Zero),
            _ => None,
        }
    }
}

/// Denominator convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// sum(d*e) / sum(d) (the default).
    WeightedMean,
    /// sum(d*e) with no denominator.
    Sum,
}

/// Cohort genotype dosages: samples by variants, values in {0, 1, 2}
/// plus the missing sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct DosageMatrix {
    sample_ids: Vec<String>,
    variant_keys: Vec<VariantKey>,
    /// Row-major, `n_samples * n_variants`.
    dosages: Vec<u8>,
}

impl DosageMatrix {
    pub fn new(
        sample_ids: Vec<String>,
        variant_keys: Vec<VariantKey>,
        dosages: Vec<u8>,
    ) -> Result<Self, AggregateError> {
        if dosages.len() != sample_ids.len() * variant_keys.len() {
            return Err(AggregateError::Format(format!(
                "matrix shape {}x{} needs {} entries, got {}",
                sample_ids.len(),
                variant_keys.len(),
                sample_ids.len() * variant_keys.len(),
                dosages.len()
            )));
        }
        if let Some(bad) = dosages.iter().find(|&&d| d > 2 && d != DOSAGE_MISSING) {
            return Err(AggregateError::Format(format!(
                "dosage value {bad} outside {{0, 1, 2, missing}}"
            )));
        }
        Ok(DosageMatrix {
            sample_ids,
            variant_keys,
            dosages,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_variants(&self) -> usize {
        self.variant_keys.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn variant_keys(&self) -> &[VariantKey] {
        &self.variant_keys
    }

    pub fn row(&self, sample: usize) -> &[u8] {
        let n = self.n_variants();
        &self.dosages[sample * n..(sample + 1) * n]
    }

    /// Write the self-describing binary form: magic, n_samples,
    /// n_variants (little-endian u64), then row-major dosage bytes.
    /// Sample ids and variant keys travel separately (the keys file).
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<(), AggregateError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(DOSAGE_MAGIC)?;
        out.write_all(&(self.n_samples() as u64).to_le_bytes())?;
        out.write_all(&(self.n_variants() as u64).to_le_bytes())?;
        out.write_all(&self.dosages)?;
        out.flush()?;
        Ok(())
    }

    /// Read the binary form; sample ids are synthesized as `S<index>` and
    /// variant keys are supplied by the caller (from the keys file).
    pub fn read_binary(
        path: impl AsRef<Path>,
        variant_keys: Vec<VariantKey>,
    ) -> Result<Self, AggregateError> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if &magic != DOSAGE_MAGIC {
            return Err(AggregateError::Format("bad magic bytes".into()));
        }
        let mut word = [0u8; 8];
        reader.read_exact(&mut word)?;
        let n_samples = u64::from_le_bytes(word) as usize;
        reader.read_exact(&mut word)?;
        let n_variants = u64::from_le_bytes(word) as usize;
        if n_variants != variant_keys.len() {
            return Err(AggregateError::Format(format!(
                "matrix declares {n_variants} variants but the keys file has {}",
                variant_keys.len()
            )));
        }
        let mut dosages = vec![0u8; n_samples * n_variants];
        reader.read_exact(&mut dosages)?;
        if reader.bytes().next().is_some() {
            return Err(AggregateError::Format("trailing bytes after matrix".into()));
        }
        let sample_ids = (0..n_samples).map(|i| format!("S{i:06}")).collect();
        DosageMatrix::new(sample_ids, variant_keys, dosages)
    }

    /// Read the TSV alternative: header `sample_id<TAB>key1<TAB>key2...`,
    /// then one row per sample with dosages 0/1/2 or "." for missing.
    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self, AggregateError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| AggregateError::Format("empty dosage TSV".into()))??;
        let mut cols = header.split('\t');
        if cols.next() != Some("sample_id") {
            return Err(AggregateError::Format(
                "first header column must be sample_id".into(),
            ));
        }
        let variant_keys: Vec<VariantKey> = cols
            .map(|c| {
                c.parse()
                    .map_err(|e| AggregateError::Format(format!("bad key {c:?}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        let mut sample_ids = Vec::new();
        let mut dosages = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields
                .next()
                .ok_or_else(|| AggregateError::Format(format!("row {} is empty", i + 2)))?;
            sample_ids.push(id.to_string());
            let mut row = Vec::with_capacity(variant_keys.len());
            for f in fields {
                let d = match f.trim() {
                    "." | "" => DOSAGE_MISSING,
                    other => other.parse::<u8>().map_err(|_| {
                        AggregateError::Format(format!("bad dosage {other:?} on row {}", i + 2))
                    })?,
                };
                row.push(d);
            }
            if row.len() != variant_keys.len() {
                return Err(AggregateError::RowShape {
                    expected: variant_keys.len(),
                    got: row.len(),
                });
            }
            dosages.extend_from_slice(&row);
        }
        DosageMatrix::new(sample_ids, variant_keys, dosages)
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), AggregateError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(b"sample_id")?;
        for k in &self.variant_keys {
            write!(out, "\t{k}")?;
        }
        out.write_all(b"\n")?;
        for (i, id) in self.sample_ids.iter().enumerate() {
            out.write_all(id.as_bytes())?;
            for &d in self.row(i) {
                if d == DOSAGE_MISSING {
                    out.write_all(b"\t.")?;
                } else {
                    write!(out, "\t{d}")?;
                }
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A cohort variant resolved to its store orientation.
#[derive(Debug, Clone)]
pub struct ResolvedColumn {
    pub store_key: String,
    pub flipped: bool,
}

/// Resolve cohort keys against the store, allowing ref/alt flips. Every
/// key must resolve; an unresolvable key is a data error, not a
/// per-sample condition.
pub fn resolve_columns(
    store: &EmbeddingStore,
    keys: &[VariantKey],
) -> Result<Vec<ResolvedColumn>, AggregateError> {
    keys.iter()
        .map(|key| {
            if store.get_variant(key)?.is_some() {
                Ok(ResolvedColumn {
                    store_key: key.to_string(),
                    flipped: false,
                })
            } else {
                let flipped = key.flipped();
                if store.get_variant(&flipped)?.is_some() {
                    Ok(ResolvedColumn {
                        store_key: flipped.to_string(),
                        flipped: true,
                    })
                } else {
                    Err(AggregateError::KeyNotInStore(key.to_string()))
                }
            }
        })
        .collect()
}

/// Effective weight of one dosage entry under the policy and orientation.
/// `None` means the entry is excluded (missing under the skip policy).
fn effective_weight(dosage: u8, flipped: bool, policy: MissingPolicy) -> Option<f64> {
    let d = if dosage == DOSAGE_MISSING {
        match policy {
            MissingPolicy::Skip => return None,
            MissingPolicy::Zero => 0,
        }
    } else {
        dosage
    };
    let d = if flipped { 2 - d } else { d };
    Some(d as f64)
}

/// Weighted mean of vectors in f64. `None` when the weights sum to zero.
/// The math layer is weight-agnostic; genotype dosages are just the
/// weights the pipeline feeds it.
pub fn weighted_mean(pairs: &[(f64, &[f32])], dim: usize) -> Option<Vec<f64>> {
    let mut numerator = vec![0.0f64; dim];
    let mut denominator = 0.0f64;
    for (w, values) in pairs {
        if *w == 0.0 {
            continue;
        }
        denominator += w;
        for (acc, v) in numerator.iter_mut().zip(values.iter()) {
            *acc += w * (*v as f64);
        }
    }
    if denominator == 0.0 {
        return None;
    }
    for acc in numerator.iter_mut() {
        *acc /= denominator;
    }
    Some(numerator)
}

/// Individual embedding for one dosage row: sum(d*e) / sum(d) over
/// non-missing entries under the skip policy, with flipped columns
/// contributing 2 - d.
pub fn individual_embedding(
    dosages: &[u8],
    store: &EmbeddingStore,
    keys: &[VariantKey],
    policy: MissingPolicy,
    normalization: Normalization,
) -> Result<Vec<f64>, AggregateError> {
    if dosages.len() != keys.len() {
        return Err(AggregateError::RowShape {
            expected: keys.len(),
            got: dosages.len(),
        });
    }
    let columns = resolve_columns(store, keys)?;
    let dim = store.dim();
    let mut numerator = vec![0.0f64; dim];
    let mut denominator = 0.0f64;
    for (d, col) in dosages.iter().zip(&columns) {
        let Some(w) = effective_weight(*d, col.flipped, policy) else {
            continue;
        };
        if w == 0.0 {
            continue;
        }
        let vector = store
            .get(&col.store_key)?
            .ok_or_else(|| AggregateError::KeyNotInStore(col.store_key.clone()))?;
        denominator += w;
        for (acc, v) in numerator.iter_mut().zip(vector.values()) {
            *acc += w * (*v as f64);
        }
    }
    if denominator == 0.0 {
        return Err(AggregateError::AllZeroDosage);
    }
    if matches!(normalization, Normalization::WeightedMean) {
        for acc in numerator.iter_mut() {
            *acc /= denominator;
        }
    }
    Ok(numerator)
}

/// Per-sample outcome of cohort aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    AllZeroDosage,
}

/// Cohort aggregation output: one embedding per sample in input order.
/// Failed samples carry a status instead of aborting the cohort.
#[derive(Debug, Clone)]
pub struct CohortAggregation {
    pub sample_ids: Vec<String>,
    pub embeddings: Vec<Option<Vec<f64>>>,
    pub status: Vec<SampleStatus>,
}

/// Aggregate a whole cohort. Variants are processed in column chunks of
/// `chunk_variants`; each chunk's vectors are fetched once and applied to
/// every sample row in parallel.
pub fn aggregate_cohort(
    matrix: &DosageMatrix,
    store: &EmbeddingStore,
    policy: MissingPolicy,
    normalization: Normalization,
    chunk_variants: usize,
) -> Result<CohortAggregation, AggregateError> {
    assert!(chunk_variants > 0, "chunk_variants must be positive");
    let columns = resolve_columns(store, matrix.variant_keys())?;
    let dim = store.dim();
    let n_samples = matrix.n_samples();

    let mut numerators: Vec<Vec<f64>> = vec![vec![0.0; dim]; n_samples];
    let mut denominators: Vec<f64> = vec![0.0; n_samples];

    for chunk_start in (0..columns.len()).step_by(chunk_variants) {
        let chunk_end = (chunk_start + chunk_variants).min(columns.len());
        let chunk_cols = &columns[chunk_start..chunk_end];
        let chunk_vectors: Vec<Vec<f32>> = chunk_cols
            .iter()
            .map(|col| {
                store
                    .get(&col.store_key)?
                    .map(|v| v.into_values())
                    .ok_or_else(|| AggregateError::KeyNotInStore(col.store_key.clone()))
            })
            .collect::<Result<_, _>>()?;

        numerators
            .par_iter_mut()
            .zip(denominators.par_iter_mut())
            .enumerate()
            .for_each(|(sample, (num, den))| {
                let row = matrix.row(sample);
                for (j, col) in chunk_cols.iter().enumerate() {
                    let d = row[chunk_start + j];
                    let Some(w) = effective_weight(d, col.flipped, policy) else {
                        continue;
                    };
                    if w == 0.0 {
                        continue;
                    }
                    *den += w;
                    let values = &chunk_vectors[j];
                    for (acc, v) in num.iter_mut().zip(values.iter()) {
                        *acc += w * (*v as f64);
                    }
                }
            });
    }

    let mut embeddings = Vec::with_capacity(n_samples);
    let mut status = Vec::with_capacity(n_samples);
    for (mut num, den) in numerators.into_iter().zip(denominators) {
        if den == 0.0 {
            embeddings.push(None);
            status.push(SampleStatus::AllZeroDosage);
        } else {
            if matches!(normalization, Normalization::WeightedMean) {
                for acc in num.iter_mut() {
                    *acc /= den;
                }
            }
            embeddings.push(Some(num));
            status.push(SampleStatus::Ok);
        }
    }
    Ok(CohortAggregation {
        sample_ids: matrix.sample_ids().to_vec(),
        embeddings,
        status,
    })
}
