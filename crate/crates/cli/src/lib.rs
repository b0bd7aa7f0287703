//! Command-line wiring for the variant embedding pipeline: one subcommand
//! per stage plus a full-pipeline driver. Subcommands consume and produce
//! only the documented file formats, so any stage can be replayed
//! standalone.

pub mod commands;
pub mod config;
pub mod logging;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Process exit codes: 0 success, 1 configuration error, 2 data error,
/// 3 backend error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<varembed_core::ingest::IngestError> for CliError {
    fn from(e: varembed_core::ingest::IngestError) -> Self {
        use varembed_core::ingest::IngestError::*;
        match e {
            Schema(_) => CliError::Config(e.to_string()),
            MalformedRow { .. } | Io(_) | StarMap(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<varembed_core::join::JoinError> for CliError {
    fn from(e: varembed_core::join::JoinError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<varembed_core::recfile::RecfileError> for CliError {
    fn from(e: varembed_core::recfile::RecfileError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<varembed_core::annotate::AnnotateError> for CliError {
    fn from(e: varembed_core::annotate::AnnotateError) -> Self {
        use varembed_core::annotate::AnnotateError::*;
        match e {
            IdentityNotFirst | DuplicateSection(_) | Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<varembed_core::tokenizer::TokenizerError> for CliError {
    fn from(e: varembed_core::tokenizer::TokenizerError) -> Self {
        use varembed_core::tokenizer::TokenizerError::*;
        match e {
            UnknownSpec(_) | VocabLoad { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<varembed_core::embed::EmbedError> for CliError {
    fn from(e: varembed_core::embed::EmbedError) -> Self {
        use varembed_core::embed::EmbedError::*;
        match e {
            Config(_) => CliError::Config(e.to_string()),
            BackendUnavailable { .. } | DimMismatch { .. } | PartialBatch { .. } | Protocol(_) => {
                CliError::Backend(e.to_string())
            }
            Io(_) | Journal(_) | Store(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<varembed_core::store::StoreError> for CliError {
    fn from(e: varembed_core::store::StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<varembed_core::aggregate::AggregateError> for CliError {
    fn from(e: varembed_core::aggregate::AggregateError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<varembed_core::eval::EvalError> for CliError {
    fn from(e: varembed_core::eval::EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "varembed",
    about = "Variant annotation, embedding, storage, aggregation, and evaluation pipeline",
    version
)]
pub struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log verbosity: error, warn, info, or debug.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a source table into a typed record file plus a skip report.
    Ingest {
        /// Source kind: favor, clinvar, or gwas.
        #[arg(long)]
        source: String,
        /// Schema JSON describing the column layout.
        #[arg(long)]
        schema: PathBuf,
        /// Input table (tab/character separated, optionally gzipped).
        #[arg(long)]
        input: PathBuf,
        /// Output record file.
        #[arg(long)]
        out: PathBuf,
        /// Abort on the first malformed row.
        #[arg(long)]
        strict: bool,
        /// Write the JSON skip report here (defaults to stdout).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Override the built-in ClinVar star map.
        #[arg(long)]
        star_map: Option<PathBuf>,
    },
    /// Join the three source record files into joined variants plus a match report.
    Join {
        #[arg(long)]
        favor: PathBuf,
        #[arg(long)]
        clinvar: PathBuf,
        #[arg(long)]
        gwas: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Duplicate FAVOR keys become an error.
        #[arg(long)]
        strict: bool,
        /// Join chromosome partitions in parallel.
        #[arg(long)]
        partition_by_chrom: bool,
        /// Use the external sort-merge path instead of the in-memory index.
        #[arg(long)]
        sort_merge: bool,
        /// In-memory rows per external-sort chunk (sort-merge path).
        #[arg(long, default_value_t = 1_000_000)]
        chunk_rows: usize,
        /// Write the JSON match report here (defaults to stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render joined variants into annotation JSON lines.
    Annotate {
        #[arg(long)]
        joined: PathBuf,
        /// Template config JSON; omit for the built-in default.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Tokenizer spec: "ws" or "bpe:<vocab-file>".
        #[arg(long, default_value = "ws")]
        tokenizer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Token statistics over an annotation file.
    Stats {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 10)]
        bin_width: u32,
        /// Write the JSON stats here (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed annotations through a backend into a sharded store.
    Embed {
        #[arg(long)]
        annotations: PathBuf,
        /// Backend spec: mock:seed=7,dim=16 | informative:dim=1024 |
        /// remote:<cfg.json> | subprocess:<cfg.json>.
        #[arg(long)]
        backend: String,
        #[arg(long, default_value_t = 256)]
        max_items: usize,
        #[arg(long, default_value_t = 8192)]
        max_tokens: u64,
        /// Concurrent batches in flight.
        #[arg(long, default_value_t = 8)]
        inflight: usize,
        /// Checkpoint journal; re-runs resume after journaled batches.
        #[arg(long)]
        journal: Option<PathBuf>,
        /// Output store directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        records_per_shard: u64,
        /// Stored precision: f32 or f16.
        #[arg(long, default_value = "f32")]
        dtype: String,
        /// Unit-normalize vectors at store time (native vectors kept by
        /// default).
        #[arg(long)]
        normalize: bool,
    },
    /// Estimate embedding cost from token counts: tokens times unit price.
    CostEstimate {
        #[arg(long)]
        annotations: PathBuf,
        /// Price per million tokens in dollars.
        #[arg(long, default_value_t = 0.13)]
        price_per_million_tokens: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Store maintenance: verify, export, import.
    Store {
        #[command(subcommand)]
        action: StoreAction,
    },
    /// Dosage-weighted individual embeddings over a cohort.
    Aggregate {
        /// Dosage matrix: .tsv (self-describing) or binary (needs --keys).
        #[arg(long)]
        dosages: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Variant key list for binary dosage input, one key per line.
        #[arg(long)]
        keys: Option<PathBuf>,
        /// Missing-dosage policy: skip or zero.
        #[arg(long, default_value = "skip")]
        policy: String,
        /// Unnormalized weighted sum instead of the weighted mean.
        #[arg(long)]
        sum: bool,
        /// Output: a store directory, or a .tsv path for text output.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        chunk_variants: usize,
    },
    /// Baseline embedding-quality evaluation.
    Eval {
        #[arg(long)]
        store: PathBuf,
        /// Task: chromosome or ref-allele.
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 10_000)]
        n_train: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Report JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional confusion matrix TSV.
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 16)]
        max_depth: usize,
    },
    /// Run the full pipeline from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override strictness.
        #[arg(long)]
        strict: Option<bool>,
        /// Override the working/output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StoreAction {
    /// Check manifest invariants and every shard checksum.
    Verify { dir: PathBuf },
    /// Export records as jsonl or tsv.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Import a JSONL export into a new store.
    Import {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        records_per_shard: u64,
        #[arg(long, default_value = "f32")]
        dtype: String,
        #[arg(long, default_value = "imported")]
        model_id: String,
        /// Key ordering: variant or sample.
        #[arg(long, default_value = "variant")]
        key_kind: String,
    },
}

/// Parse a dtype flag.
pub fn parse_dtype(s: &str) -> Result<varembed_core::store::Dtype, CliError> {
    match s {
        "f32" => Ok(varembed_core::store::Dtype::F32),
        "f16" => Ok(varembed_core::store::Dtype::F16),
        other => Err(CliError::Config(format!("unknown dtype {other:?}"))),
    }
}

/// Configure the global worker pool once, before any parallel stage runs.
pub fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("thread count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Top-level dispatch.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let logger = logging::Logger::from_level_name(&cli.log_level)?;
    configure_threads(cli.threads)?;
    commands::dispatch(cli.command, &logger)
}
