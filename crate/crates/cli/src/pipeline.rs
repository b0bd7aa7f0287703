//! Full-pipeline driver: ingest, join, annotate, embed, optional
//! aggregate, optional eval, with a machine-readable run report. Stages
//! hand off through files in the output directory, so any stage can be
//! replayed standalone with the matching subcommand. The first hard error
//! aborts the run, writes a partial report, and maps to a nonzero exit.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use varembed_core::embed::BatchLimits;
use varembed_core::stats::TokenStats;

use crate::commands;
use crate::config::PipelineConfig;
use crate::logging::Logger;
use crate::{parse_dtype, CliError};

#[derive(Debug, Serialize)]
pub struct StageReport {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    pub details: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub strict: bool,
    pub stages: Vec<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct PipelinePaths {
    pub favor_rec: PathBuf,
    pub clinvar_rec: PathBuf,
    pub gwas_rec: PathBuf,
    pub joined_rec: PathBuf,
    pub annotations: PathBuf,
    pub store_dir: PathBuf,
    pub report: PathBuf,
}

impl PipelinePaths {
    pub fn under(dir: &std::path::Path) -> Self {
        PipelinePaths {
            favor_rec: dir.join("favor.rec"),
            clinvar_rec: dir.join("clinvar.rec"),
            gwas_rec: dir.join("gwas.rec"),
            joined_rec: dir.join("joined.rec"),
            annotations: dir.join("annotations.jsonl"),
            store_dir: dir.join("store"),
            report: dir.join("run_report.json"),
        }
    }
}

/// Execute the configured stages in order. Returns the report; also
/// writes it (complete or partial) to `<output.dir>/run_report.json`.
pub fn run_pipeline(cfg: &PipelineConfig, logger: &Logger) -> Result<RunReport, CliError> {
    cfg.validate()?;
    crate::configure_threads(cfg.threads).ok(); // global pool may already exist
    std::fs::create_dir_all(&cfg.output.dir)?;
    let paths = PipelinePaths::under(&cfg.output.dir);

    let mut report = RunReport {
        seed: cfg.seed,
        strict: cfg.strict,
        stages: Vec::new(),
        error: None,
    };

    match run_stages(cfg, &paths, logger, &mut report) {
        Ok(()) => {
            write_report(&paths.report, &report)?;
            Ok(report)
        }
        Err(e) => {
            report.error = Some(e.to_string());
            write_report(&paths.report, &report).ok();
            Err(e)
        }
    }
}

fn write_report(path: &std::path::Path, report: &RunReport) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Data(format!("serialize run report: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn run_stages(
    cfg: &PipelineConfig,
    paths: &PipelinePaths,
    logger: &Logger,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let stage = |name: &str,
                 report: &mut RunReport,
                 f: &mut dyn FnMut() -> Result<serde_json::Value, CliError>|
     -> Result<(), CliError> {
        let started = Instant::now();
        let details = f()?;
        let duration_ms = cfg
            .output
            .include_timings
            .then(|| started.elapsed().as_millis() as u64);
        logger.info(name, "stage complete", &[("details", details.clone())]);
        report.stages.push(StageReport {
            stage: name.to_string(),
            duration_ms,
            details,
        });
        Ok(())
    };

    stage("ingest", report, &mut || {
        let favor = commands::ingest(
            "favor",
            &cfg.sources.favor.schema,
            &cfg.sources.favor.input,
            &paths.favor_rec,
            cfg.strict,
            None,
        )?;
        let clinvar = commands::ingest(
            "clinvar",
            &cfg.sources.clinvar.schema,
            &cfg.sources.clinvar.input,
            &paths.clinvar_rec,
            cfg.strict,
            cfg.sources.clinvar.star_map.as_deref(),
        )?;
        let gwas = commands::ingest(
            "gwas",
            &cfg.sources.gwas.schema,
            &cfg.sources.gwas.input,
            &paths.gwas_rec,
            cfg.strict,
            None,
        )?;
        Ok(json!({ "favor": favor, "clinvar": clinvar, "gwas": gwas }))
    })?;

    stage("join", report, &mut || {
        let match_report = if cfg.join.partition_by_chrom {
            let favor_rows = varembed_core::recfile::RecfileReader::open(
                &paths.favor_rec,
                varembed_core::recfile::RecordKind::Favor,
            )?
            .rows::<varembed_core::recfile::FavorRow>()
            .map(|r| r.map(varembed_core::recfile::FavorRow::into_record))
            .collect::<Result<Vec<_>, _>>()?;
            let clinvar_rows = varembed_core::recfile::RecfileReader::open(
                &paths.clinvar_rec,
                varembed_core::recfile::RecordKind::Clinvar,
            )?
            .rows::<varembed_core::recfile::ClinVarRow>()
            .map(|r| r.map(varembed_core::recfile::ClinVarRow::into_record))
            .collect::<Result<Vec<_>, _>>()?;
            let gwas_rows = varembed_core::recfile::RecfileReader::open(
                &paths.gwas_rec,
                varembed_core::recfile::RecordKind::Gwas,
            )?
            .rows::<varembed_core::recfile::GwasRow>()
            .collect::<Result<Vec<_>, _>>()?;
            let (index, _) =
                varembed_core::join::build_variant_index(favor_rows, false, cfg.strict)?;
            let out =
                varembed_core::join::join_sources_partitioned(&index, clinvar_rows, gwas_rows);
            let mut writer = varembed_core::recfile::RecfileWriter::create(
                &paths.joined_rec,
                varembed_core::recfile::RecordKind::Joined,
            )?;
            for v in &out.variants {
                writer.write_row(&varembed_core::recfile::JoinedRow::from(v.clone()))?;
            }
            writer.finish()?;
            out.report
        } else {
            commands::join_files(
                &paths.favor_rec,
                &paths.clinvar_rec,
                &paths.gwas_rec,
                &paths.joined_rec,
                cfg.strict,
                false,
            )?
        };
        Ok(serde_json::to_value(match_report).unwrap_or_default())
    })?;

    let mut token_stats: Option<TokenStats> = None;
    stage("annotate", report, &mut || {
        let count = commands::annotate(
            &paths.joined_rec,
            cfg.annotate.template.as_deref(),
            &cfg.annotate.tokenizer,
            &paths.annotations,
        )?;
        let stats = commands::stats(&paths.annotations, cfg.annotate.bin_width)?;
        token_stats = Some(stats.clone());
        Ok(json!({ "annotations": count, "token_stats": stats }))
    })?;
    let _ = token_stats;

    stage("embed", report, &mut || {
        let journal = cfg
            .embed
            .journal
            .as_ref()
            .map(|j| commands::resolve_under(&cfg.output.dir, j));
        let run_report = commands::embed(
            &paths.annotations,
            &cfg.embed.backend,
            BatchLimits::new(cfg.embed.max_items, cfg.embed.max_tokens),
            cfg.embed.inflight,
            journal.as_deref(),
            &paths.store_dir,
            cfg.embed.records_per_shard,
            parse_dtype(&cfg.embed.dtype)?,
            cfg.embed.normalize,
        )?;
        Ok(serde_json::to_value(run_report).unwrap_or_default())
    })?;

    if let Some(agg) = &cfg.aggregate {
        stage("aggregate", report, &mut || {
            let out = commands::resolve_under(&cfg.output.dir, &agg.out);
            commands::aggregate(
                &agg.dosages,
                &paths.store_dir,
                agg.keys.as_deref(),
                &agg.policy,
                agg.sum,
                &out,
                agg.chunk_variants,
            )
        })?;
    }

    if let Some(eval_cfg) = &cfg.eval {
        for task in &eval_cfg.tasks {
            let stage_name = format!("eval:{task}");
            let task = task.clone();
            stage(&stage_name, report, &mut || {
                let out = cfg.output.dir.join(format!("eval_{task}.json"));
                let confusion = cfg.output.dir.join(format!("confusion_{task}.tsv"));
                let eval_report = commands::eval(
                    &paths.store_dir,
                    &task,
                    eval_cfg.n_train,
                    cfg.seed,
                    eval_cfg.trees,
                    eval_cfg.max_depth,
                    &out,
                    Some(&confusion),
                )?;
                Ok(serde_json::to_value(eval_report).unwrap_or_default())
            })?;
        }
    }

    Ok(())
}
