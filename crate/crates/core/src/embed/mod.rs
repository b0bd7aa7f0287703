//! Pluggable embedding backends and batch planning.
//!
//! One pipeline serves every scale by swapping the backend: deterministic
//! mocks for tests and desk runs, a batched remote API client for hosted
//! models, and a line-protocol subprocess adapter for local models. All
//! backends share the same contract: one vector per input item, output
//! keys aligned with input keys, uniform dimension and model id.

pub mod journal;
pub mod mock;
pub mod remote;
pub mod runner;
pub mod simserver;
pub mod subprocess;

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnnotationText, EmbeddingVector};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("backend unavailable after {attempts} attempts: {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("dimension mismatch: expected {expected}, backend returned {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("partial batch: requested {requested} embeddings, received {received}")]
    PartialBatch { requested: usize, received: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("journal error: {0}")]
    Journal(String),
    #[error("store error: {0}")]
    Store(#[from] crate::store::StoreError),
}

/// Packing limits for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchLimits {
    pub max_items: usize,
    pub max_tokens: u64,
}

impl BatchLimits {
    pub fn new(max_items: usize, max_tokens: u64) -> Self {
        assert!(max_items > 0 && max_tokens > 0, "limits must be positive");
        BatchLimits {
            max_items,
            max_tokens,
        }
    }
}

/// One planned batch: ordered items plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub index: usize,
    /// (key, text) in input order.
    pub items: Vec<(String, String)>,
    pub token_total: u64,
    /// A single item whose token count exceeds `max_tokens` passes
    /// through as its own flagged batch rather than being truncated.
    pub oversize: bool,
}

/// Greedy in-order packing of an annotation stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub batches: Vec<Batch>,
    pub limits: BatchLimits,
}

impl BatchPlan {
    pub fn total_items(&self) -> usize {
        self.batches.iter().map(|b| b.items.len()).sum()
    }

    pub fn oversize_count(&self) -> usize {
        self.batches.iter().filter(|b| b.oversize).count()
    }
}

/// Pack annotations into batches greedily and in order: a batch closes
/// when adding the next item would violate either limit. Deterministic;
/// concatenating the batches reproduces the input order exactly.
pub fn plan_batches(
    annotations: impl IntoIterator<Item = AnnotationText>,
    limits: BatchLimits,
) -> BatchPlan {
    let mut batches: Vec<Batch> = Vec::new();
    let mut items: Vec<(String, String)> = Vec::new();
    let mut tokens = 0u64;

    let close = |items: &mut Vec<(String, String)>, tokens: &mut u64, batches: &mut Vec<Batch>| {
        if !items.is_empty() {
            let oversize = *tokens > limits.max_tokens;
            batches.push(Batch {
                index: batches.len(),
                items: std::mem::take(items),
                token_total: *tokens,
                oversize,
            });
            *tokens = 0;
        }
    };

    for ann in annotations {
        let t = ann.token_count as u64;
        if t > limits.max_tokens {
            // Oversize passthrough: flush the open batch, then emit the
            // item as a flagged singleton.
            close(&mut items, &mut tokens, &mut batches);
            items.push((ann.key.to_string(), ann.text));
            tokens = t;
            close(&mut items, &mut tokens, &mut batches);
            continue;
        }
        if items.len() + 1 > limits.max_items || tokens + t > limits.max_tokens {
            close(&mut items, &mut tokens, &mut batches);
        }
        items.push((ann.key.to_string(), ann.text));
        tokens += t;
    }
    close(&mut items, &mut tokens, &mut batches);
    BatchPlan { batches, limits }
}

/// An embedding backend. Implementations guarantee one output per input,
/// key-aligned with the request; the runner re-checks that contract.
pub trait EmbedBackend: Send + Sync {
    fn model_id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed_batch(
        &self,
        items: &[(String, String)],
    ) -> Result<Vec<(String, EmbeddingVector)>, EmbedError>;
}

/// Remote API backend settings. The credential is read from the named
/// environment variable at request time and never stored in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model_id: String,
    pub dim: usize,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    /// Requests per second over a sliding 1-second window; 0 = unlimited.
    #[serde(default)]
    pub rate_limit_rps: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_base_ms() -> u64 {
    100
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Subprocess adapter settings: the command is spawned once and spoken
/// to over the JSON-lines protocol (see [`subprocess`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubprocessConfig {
    /// Command and arguments.
    pub command: Vec<String>,
    pub dim: usize,
    #[serde(default)]
    pub model_id: Option<String>,
}

/// Backend selection, parsed from the CLI spec or built directly.
#[derive(Debug, Clone)]
pub enum BackendConfig {
    Mock { seed: u64, dim: usize },
    InformativeMock { dim: usize },
    Remote(RemoteConfig),
    Subprocess(SubprocessConfig),
}

impl BackendConfig {
    /// Parse a CLI backend spec:
    /// `mock:seed=7,dim=16`, `informative:dim=1024`, `remote:<cfg.json>`,
    /// or `subprocess:<cfg.json>`.
    pub fn from_spec(spec: &str) -> Result<Self, EmbedError> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| EmbedError::Config(format!("bad backend spec {spec:?}")))?;
        match kind {
            "mock" => {
                let mut seed = None;
                let mut dim = None;
                for part in rest.split(',') {
                    match part.split_once('=') {
                        Some(("seed", v)) => seed = v.parse().ok(),
                        Some(("dim", v)) => dim = v.parse().ok(),
                        _ => return Err(EmbedError::Config(format!("bad mock option {part:?}"))),
                    }
                }
                Ok(BackendConfig::Mock {
                    seed: seed.ok_or_else(|| EmbedError::Config("mock needs seed=".into()))?,
                    dim: dim.ok_or_else(|| EmbedError::Config("mock needs dim=".into()))?,
                })
            }
            "informative" => {
                let dim = rest
                    .strip_prefix("dim=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| EmbedError::Config("informative needs dim=<n>".into()))?;
                Ok(BackendConfig::InformativeMock { dim })
            }
            "remote" => Ok(BackendConfig::Remote(load_json_config(rest)?)),
            "subprocess" => Ok(BackendConfig::Subprocess(load_json_config(rest)?)),
            _ => Err(EmbedError::Config(format!("unknown backend kind {kind:?}"))),
        }
    }

    pub fn build(&self) -> Result<Box<dyn EmbedBackend>, EmbedError> {
        match self {
            BackendConfig::Mock { seed, dim } => Ok(Box::new(mock::HashMock::new(*seed, *dim)?)),
            BackendConfig::InformativeMock { dim } => {
                Ok(Box::new(mock::InformativeMock::new(*dim)?))
            }
            BackendConfig::Remote(cfg) => Ok(Box::new(remote::RemoteClient::new(cfg.clone())?)),
            BackendConfig::Subprocess(cfg) => {
                Ok(Box::new(subprocess::SubprocessBackend::spawn(cfg.clone())?))
            }
        }
    }
}

fn load_json_config<T: serde::de::DeserializeOwned>(path: &str) -> Result<T, EmbedError> {
    let text = std::fs::read_to_string(Path::new(path))
        .map_err(|e| EmbedError::Config(format!("cannot read {path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| EmbedError::Config(format!("{path}: {e}")))
}

/// Enforce the backend output contract against the request.
pub(crate) fn check_alignment(
    items: &[(String, String)],
    output: &[(String, EmbeddingVector)],
    dim: usize,
) -> Result<(), EmbedError> {
    if output.len() != items.len() {
        return Err(EmbedError::PartialBatch {
            requested: items.len(),
            received: output.len(),
        });
    }
    for ((in_key, _), (out_key, vector)) in items.iter().zip(output) {
        if in_key != out_key {
            return Err(EmbedError::Protocol(format!(
                "output key {out_key:?} does not match input key {in_key:?}"
            )));
        }
        if vector.dim() != dim {
            return Err(EmbedError::DimMismatch {
                expected: dim,
                got: vector.dim(),
            });
        }
    }
    Ok(())
}
