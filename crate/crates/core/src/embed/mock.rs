//! Deterministic mock backends.
//!
//! [`HashMock`] maps text to a seeded unit-norm pseudo-random vector: a
//! pure function of (seed, text), identical on every platform. It carries
//! no recoverable structure, so classifiers trained on its output sit at
//! chance level.
//!
//! [`InformativeMock`] instead parses the annotation's identity sentence
//! and encodes it into the first 64 coordinates: a chromosome one-hot
//! (25), a reference-allele one-hot (4), and the scaled position, with
//! low-amplitude seeded noise everywhere past coordinate 63. Baseline
//! prediction tasks are solvable from these vectors by construction,
//! mirroring what real text embeddings demonstrate.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh64::xxh64;

use crate::model::{Chromosome, EmbeddingVector};

use super::{EmbedBackend, EmbedError};

/// Size of the structured identity block in [`InformativeMock`] vectors.
pub const IDENTITY_BLOCK: usize = 64;
/// Amplitude of the noise coordinates past the identity block.
pub const NOISE_AMPLITUDE: f32 = 0.1;

/// Standard normal draw via Box-Muller on two uniform words; avoids any
/// dependence on sampler implementation details across versions.
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64; // (0, 1]
    let u2 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

fn uniform_unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 // [0, 1)
}

/// Hash-seeded unit-norm random vectors: deterministic, structure-free.
pub struct HashMock {
    seed: u64,
    dim: usize,
    model_id: String,
}

impl HashMock {
    pub fn new(seed: u64, dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::Config("mock dim must be positive".into()));
        }
        Ok(HashMock {
            seed,
            dim,
            model_id: format!("mock-seed{seed}-dim{dim}"),
        })
    }

    fn vector_for(&self, text: &str) -> EmbeddingVector {
        let mut rng = ChaCha8Rng::seed_from_u64(xxh64(text.as_bytes(), self.seed));
        let mut values = Vec::with_capacity(self.dim);
        while values.len() < self.dim {
            let (a, b) = normal_pair(&mut rng);
            values.push(a as f32);
            if values.len() < self.dim {
                values.push(b as f32);
            }
        }
        let norm = values
            .iter()
            .map(|v| (*v as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        // A zero norm from dim draws of a continuous distribution does not
        // happen; guard anyway.
        let norm = if norm == 0.0 { 1.0 } else { norm };
        for v in values.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
        EmbeddingVector::new(values, self.model_id.clone()).expect("finite by construction")
    }
}

impl EmbedBackend for HashMock {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(
        &self,
        items: &[(String, String)],
    ) -> Result<Vec<(String, EmbeddingVector)>, EmbedError> {
        Ok(items
            .iter()
            .map(|(key, text)| (key.clone(), self.vector_for(text)))
            .collect())
    }
}

/// Identity parsed out of an annotation's first sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedIdentity {
    pub chromosome: Chromosome,
    pub position: u64,
    pub ref_base: u8,
}

/// Pull chromosome, position, and reference allele out of rendered
/// annotation text. Relies only on the fixed identity phrases, not on
/// the variant key, so it proves the information is present in the text.
pub fn parse_identity(text: &str) -> Option<ParsedIdentity> {
    let chrom_start = text.find("on chromosome ")? + "on chromosome ".len();
    let chrom_raw: String = text[chrom_start..]
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect();
    let chromosome = Chromosome::parse(&chrom_raw).ok()?;

    let pos_start = text.find("at position ")? + "at position ".len();
    let pos_raw: String = text[pos_start..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let position: u64 = pos_raw.parse().ok()?;

    let ref_start = text.find("reference allele ")? + "reference allele ".len();
    let ref_base = text.as_bytes().get(ref_start).copied()?;
    if !matches!(ref_base, b'A' | b'C' | b'G' | b'T') {
        return None;
    }
    Some(ParsedIdentity {
        chromosome,
        position,
        ref_base,
    })
}

fn base_index(base: u8) -> usize {
    match base {
        b'A' => 0,
        b'C' => 1,
        b'G' => 2,
        b'T' => 3,
        _ => unreachable!("validated in parse_identity"),
    }
}

/// Longest GRCh38 chromosome is ~249 Mb; positions scale into (0, 1].
const POSITION_SCALE: f64 = 2.5e8;

/// Mock whose identity block makes the baseline tasks solvable.
pub struct InformativeMock {
    dim: usize,
    model_id: String,
}

impl InformativeMock {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < IDENTITY_BLOCK {
            return Err(EmbedError::Config(format!(
                "informative mock needs dim >= {IDENTITY_BLOCK}, got {dim}"
            )));
        }
        Ok(InformativeMock {
            dim,
            model_id: format!("informative-mock-dim{dim}"),
        })
    }

    fn vector_for(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let identity = parse_identity(text).ok_or_else(|| {
            EmbedError::Protocol(format!(
                "annotation text lacks a parseable identity sentence: {:?}",
                &text[..text.len().min(80)]
            ))
        })?;
        let mut values = vec![0.0f32; self.dim];
        values[(identity.chromosome.rank() - 1) as usize] = 1.0;
        values[25 + base_index(identity.ref_base)] = 1.0;
        values[29] = (identity.position as f64 / POSITION_SCALE).min(1.0) as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(xxh64(text.as_bytes(), 0x1d0));
        for v in values.iter_mut().skip(IDENTITY_BLOCK) {
            *v = ((uniform_unit(&mut rng) * 2.0 - 1.0) * NOISE_AMPLITUDE as f64) as f32;
        }
        Ok(EmbeddingVector::new(values, self.model_id.clone()).expect("finite by construction"))
    }
}

impl EmbedBackend for InformativeMock {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(
        &self,
        items: &[(String, String)],
    ) -> Result<Vec<(String, EmbeddingVector)>, EmbedError> {
        items
            .iter()
            .map(|(key, text)| Ok((key.clone(), self.vector_for(text)?)))
            .collect()
    }
}
