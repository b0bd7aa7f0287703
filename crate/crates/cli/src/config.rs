//! Full-pipeline TOML configuration. Every path is validated before any
//! stage runs; command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Single source of randomness for the pipeline.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub strict: bool,
    pub sources: Sources,
    #[serde(default)]
    pub join: JoinConfig,
    #[serde(default)]
    pub annotate: AnnotateConfig,
    pub embed: EmbedStageConfig,
    #[serde(default)]
    pub aggregate: Option<AggregateStageConfig>,
    #[serde(default)]
    pub eval: Option<EvalStageConfig>,
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sources {
    pub favor: SourceConfig,
    pub clinvar: SourceConfig,
    pub gwas: SourceConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub input: PathBuf,
    pub schema: PathBuf,
    /// ClinVar only: override the built-in review-status star map.
    #[serde(default)]
    pub star_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinConfig {
    #[serde(default)]
    pub partition_by_chrom: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateConfig {
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default = "default_bin_width")]
    pub bin_width: u32,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            template: None,
            tokenizer: default_tokenizer(),
            bin_width: default_bin_width(),
        }
    }
}

fn default_tokenizer() -> String {
    "ws".to_string()
}

fn default_bin_width() -> u32 {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedStageConfig {
    /// Backend spec string, e.g. "informative:dim=128".
    pub backend: String,
    #[serde(default = "default_max_items")]
    pub max_items: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u64,
    #[serde(default = "default_inflight")]
    pub inflight: usize,
    /// Journal path relative to the output dir unless absolute.
    #[serde(default)]
    pub journal: Option<PathBuf>,
    #[serde(default = "default_records_per_shard")]
    pub records_per_shard: u64,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    /// Unit-normalize vectors at store time; native vectors by default.
    #[serde(default)]
    pub normalize: bool,
}

fn default_max_items() -> usize {
    256
}

fn default_max_tokens() -> u64 {
    8192
}

fn default_inflight() -> usize {
    8
}

fn default_records_per_shard() -> u64 {
    1_000_000
}

fn default_dtype() -> String {
    "f32".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateStageConfig {
    pub dosages: PathBuf,
    /// Required for binary dosage matrices; TSV carries its own keys.
    #[serde(default)]
    pub keys: Option<PathBuf>,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub sum: bool,
    /// Output store directory, or a path ending in .tsv.
    pub out: PathBuf,
    #[serde(default = "default_chunk_variants")]
    pub chunk_variants: usize,
}

fn default_policy() -> String {
    "skip".to_string()
}

fn default_chunk_variants() -> usize {
    512
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalStageConfig {
    pub tasks: Vec<String>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_trees")]
    pub trees: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
}

fn default_n_train() -> usize {
    10_000
}

fn default_trees() -> usize {
    100
}

fn default_max_depth() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Working directory for intermediates, reports, and the store.
    pub dir: PathBuf,
    /// Include per-stage durations in the run report. Disable for
    /// byte-identical reports across runs.
    #[serde(default = "default_true")]
    pub include_timings: bool,
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    /// Referenced files must exist before any stage runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut required: Vec<&PathBuf> = vec![
            &self.sources.favor.input,
            &self.sources.favor.schema,
            &self.sources.clinvar.input,
            &self.sources.clinvar.schema,
            &self.sources.gwas.input,
            &self.sources.gwas.schema,
        ];
        if let Some(p) = &self.sources.clinvar.star_map {
            required.push(p);
        }
        if let Some(p) = &self.annotate.template {
            required.push(p);
        }
        if let Some(vocab) = self.annotate.tokenizer.strip_prefix("bpe:") {
            let vocab = PathBuf::from(vocab);
            if !vocab.exists() {
                return Err(CliError::Config(format!(
                    "tokenizer vocab {} does not exist",
                    vocab.display()
                )));
            }
        }
        if let Some(agg) = &self.aggregate {
            required.push(&agg.dosages);
            if let Some(k) = &agg.keys {
                required.push(k);
            }
        }
        for path in required {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "configured file {} does not exist",
                    path.display()
                )));
            }
        }
        if let Some(threads) = self.threads {
            if threads == 0 {
                return Err(CliError::Config("threads must be >= 1".into()));
            }
        }
        if let Some(eval) = &self.eval {
            for task in &eval.tasks {
                if varembed_core::eval::EvalTask::parse(task).is_none() {
                    return Err(CliError::Config(format!("unknown eval task {task:?}")));
                }
            }
        }
        varembed_core::embed::BackendConfig::from_spec(&self.embed.backend)
            .map_err(|e| CliError::Config(e.to_string()))?;
        crate::parse_dtype(&self.embed.dtype)?;
        if let Some(agg) = &self.aggregate {
            if varembed_core::aggregate::MissingPolicy::parse(&agg.policy).is_none() {
                return Err(CliError::Config(format!(
                    "unknown missing policy {:?}",
                    agg.policy
                )));
            }
        }
        Ok(())
    }
}
