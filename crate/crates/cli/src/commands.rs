//! Subcommand implementations. Each function consumes and produces only
//! the documented file formats; the pipeline driver composes them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use varembed_core::aggregate::{
    aggregate_cohort, DosageMatrix, MissingPolicy, Normalization, SampleStatus,
};
use varembed_core::annotate::{
    read_annotations, render_annotation, write_annotations, TemplateConfig,
};
use varembed_core::embed::runner::{cost_estimate, run_embedding, EmbedRunOptions, EmbedRunReport};
use varembed_core::embed::{BackendConfig, BatchLimits};
use varembed_core::eval::{evaluate_task, EvalReport, EvalTask, ForestHyperparams};
use varembed_core::ingest::{
    open_input, ClinVarParser, FavorParser, GwasParser, ParseOptions, SkipReport, SourceKind,
    SourceSchema, StarMap,
};
use varembed_core::join::{
    build_variant_index, join_sources, join_sources_partitioned, merge_join_sorted,
    sort_source_recfiles, MatchReport,
};
use varembed_core::model::{EmbeddingVector, VariantKey};
use varembed_core::recfile::{
    read_joined, ClinVarRow, FavorRow, GwasRow, JoinedRow, RecfileReader, RecfileWriter, RecordKind,
};
use varembed_core::stats::{summarize_tokens, TokenStats};
use varembed_core::store::{
    export_jsonl, export_tsv, import_jsonl, Dtype, EmbeddingStore, KeyKind, ShardWriter,
};
use varembed_core::tokenizer::Tokenizer;

use crate::logging::Logger;
use crate::{parse_dtype, CliError, Command, StoreAction};

pub fn dispatch(command: Command, logger: &Logger) -> Result<(), CliError> {
    match command {
        Command::Ingest {
            source,
            schema,
            input,
            out,
            strict,
            report,
            star_map,
        } => {
            let report_out = ingest(&source, &schema, &input, &out, strict, star_map.as_deref())?;
            emit_json(report.as_deref(), &report_out)?;
            logger.info(
                "ingest",
                "source ingested",
                &[
                    ("source", json!(source)),
                    ("valid", json!(report_out.valid)),
                    ("skipped", json!(report_out.skipped)),
                ],
            );
            Ok(())
        }
        Command::Join {
            favor,
            clinvar,
            gwas,
            out,
            strict,
            partition_by_chrom,
            sort_merge,
            chunk_rows,
            report,
        } => {
            let match_report = if sort_merge {
                join_files_sorted(&favor, &clinvar, &gwas, &out, chunk_rows)?
            } else {
                join_files(&favor, &clinvar, &gwas, &out, strict, partition_by_chrom)?
            };
            emit_json(report.as_deref(), &match_report)?;
            logger.info(
                "join",
                "sources joined",
                &[
                    ("clinvar_direct", json!(match_report.clinvar.direct)),
                    ("clinvar_flipped", json!(match_report.clinvar.flipped)),
                    ("gwas_direct", json!(match_report.gwas.direct)),
                ],
            );
            Ok(())
        }
        Command::Annotate {
            joined,
            template,
            tokenizer,
            out,
        } => {
            let n = annotate(&joined, template.as_deref(), &tokenizer, &out)?;
            logger.info("annotate", "annotations rendered", &[("count", json!(n))]);
            Ok(())
        }
        Command::Stats {
            annotations,
            bin_width,
            out,
        } => {
            let stats = stats(&annotations, bin_width)?;
            emit_json(out.as_deref(), &stats)?;
            Ok(())
        }
        Command::Embed {
            annotations,
            backend,
            max_items,
            max_tokens,
            inflight,
            journal,
            out,
            records_per_shard,
            dtype,
            normalize,
        } => {
            let report = embed(
                &annotations,
                &backend,
                BatchLimits::new(max_items, max_tokens),
                inflight,
                journal.as_deref(),
                &out,
                records_per_shard,
                parse_dtype(&dtype)?,
                normalize,
            )?;
            logger.info(
                "embed",
                "store written",
                &[
                    ("records", json!(report.records)),
                    ("batches", json!(report.batches_total)),
                    ("from_journal", json!(report.batches_from_journal)),
                ],
            );
            Ok(())
        }
        Command::CostEstimate {
            annotations,
            price_per_million_tokens,
            out,
        } => {
            let estimate = estimate_cost(&annotations, price_per_million_tokens)?;
            emit_json(out.as_deref(), &estimate)?;
            Ok(())
        }
        Command::Store { action } => store_action(action, logger),
        Command::Aggregate {
            dosages,
            store,
            keys,
            policy,
            sum,
            out,
            chunk_variants,
        } => {
            let summary = aggregate(
                &dosages,
                &store,
                keys.as_deref(),
                &policy,
                sum,
                &out,
                chunk_variants,
            )?;
            emit_json(None, &summary)?;
            Ok(())
        }
        Command::Eval {
            store,
            task,
            n_train,
            seed,
            out,
            confusion,
            trees,
            max_depth,
        } => {
            let report = eval(
                &store,
                &task,
                n_train,
                seed,
                trees,
                max_depth,
                &out,
                confusion.as_deref(),
            )?;
            logger.info(
                "eval",
                "task evaluated",
                &[("task", json!(task)), ("accuracy", json!(report.accuracy))],
            );
            Ok(())
        }
        Command::Run {
            config,
            seed,
            strict,
            out_dir,
        } => {
            let mut cfg = crate::config::PipelineConfig::from_toml_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(strict) = strict {
                cfg.strict = strict;
            }
            if let Some(dir) = out_dir {
                cfg.output.dir = dir;
            }
            crate::pipeline::run_pipeline(&cfg, logger).map(|_| ())
        }
    }
}

fn emit_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serialize report: {e}")))?;
    match path {
        Some(path) => {
            std::fs::write(path, text + "\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

pub fn ingest(
    source: &str,
    schema_path: &Path,
    input: &Path,
    out: &Path,
    strict: bool,
    star_map: Option<&Path>,
) -> Result<SkipReport, CliError> {
    let schema = SourceSchema::from_json_file(schema_path)?;
    let opts = ParseOptions { strict };
    let reader = open_input(input)?;
    let expected_kind = match source {
        "favor" => SourceKind::Favor,
        "clinvar" => SourceKind::Clinvar,
        "gwas" => SourceKind::GwasCatalog,
        other => {
            return Err(CliError::Config(format!(
                "unknown source {other:?}; expected favor|clinvar|gwas"
            )))
        }
    };
    if schema.source_kind != expected_kind {
        return Err(CliError::Config(format!(
            "schema is for {:?}, not {source}",
            schema.source_kind
        )));
    }

    match expected_kind {
        SourceKind::Favor => {
            let mut parser = FavorParser::new(reader, &schema, opts)?;
            let mut writer = RecfileWriter::create(out, RecordKind::Favor)?;
            for record in &mut parser {
                let (key, annotation) = record?;
                writer.write_row(&FavorRow::from_record(key, annotation))?;
            }
            writer.finish()?;
            Ok(parser.into_report())
        }
        SourceKind::Clinvar => {
            let stars = match star_map {
                Some(path) => StarMap::from_file(path)?,
                None => StarMap::built_in(),
            };
            let mut parser = ClinVarParser::new(reader, &schema, stars, opts)?;
            let mut writer = RecfileWriter::create(out, RecordKind::Clinvar)?;
            for record in &mut parser {
                let (key, clinvar) = record?;
                writer.write_row(&ClinVarRow::from_record(key, clinvar))?;
            }
            writer.finish()?;
            Ok(parser.into_report())
        }
        SourceKind::GwasCatalog => {
            let mut parser = GwasParser::new(reader, &schema, opts)?;
            let mut writer = RecfileWriter::create(out, RecordKind::Gwas)?;
            for record in &mut parser {
                writer.write_row(&record?)?;
            }
            writer.finish()?;
            Ok(parser.into_report())
        }
    }
}

// ---------------------------------------------------------------------------
// join
// ---------------------------------------------------------------------------

pub fn join_files(
    favor: &Path,
    clinvar: &Path,
    gwas: &Path,
    out: &Path,
    strict: bool,
    partition_by_chrom: bool,
) -> Result<MatchReport, CliError> {
    let favor_rows = RecfileReader::open(favor, RecordKind::Favor)?
        .rows::<FavorRow>()
        .map(|r| r.map(FavorRow::into_record))
        .collect::<Result<Vec<_>, _>>()?;
    let clinvar_rows = RecfileReader::open(clinvar, RecordKind::Clinvar)?
        .rows::<ClinVarRow>()
        .map(|r| r.map(ClinVarRow::into_record))
        .collect::<Result<Vec<_>, _>>()?;
    let gwas_rows = RecfileReader::open(gwas, RecordKind::Gwas)?
        .rows::<GwasRow>()
        .collect::<Result<Vec<_>, _>>()?;

    let (index, _) = build_variant_index(favor_rows, false, strict)?;
    let output = if partition_by_chrom {
        join_sources_partitioned(&index, clinvar_rows, gwas_rows)
    } else {
        join_sources(&index, clinvar_rows, gwas_rows)
    };

    let mut writer = RecfileWriter::create(out, RecordKind::Joined)?;
    for variant in &output.variants {
        writer.write_row(&JoinedRow::from(variant.clone()))?;
    }
    writer.finish()?;
    Ok(output.report)
}

pub fn join_files_sorted(
    favor: &Path,
    clinvar: &Path,
    gwas: &Path,
    out: &Path,
    chunk_rows: usize,
) -> Result<MatchReport, CliError> {
    let sort_dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .join(".varembed-sort");
    let (favor_sorted, clinvar_sorted, gwas_sorted) =
        sort_source_recfiles(favor, clinvar, gwas, &sort_dir, chunk_rows)?;
    let mut writer = RecfileWriter::create(out, RecordKind::Joined)?;
    let report = merge_join_sorted(&favor_sorted, &clinvar_sorted, &gwas_sorted, |variant| {
        writer
            .write_row(&JoinedRow::from(variant))
            .map_err(varembed_core::join::JoinError::Recfile)
    })?;
    writer.finish()?;
    std::fs::remove_dir_all(&sort_dir).ok();
    Ok(report)
}

// ---------------------------------------------------------------------------
// annotate + stats
// ---------------------------------------------------------------------------

pub fn annotate(
    joined: &Path,
    template: Option<&Path>,
    tokenizer_spec: &str,
    out: &Path,
) -> Result<u64, CliError> {
    use rayon::prelude::*;
    let cfg = match template {
        Some(path) => TemplateConfig::from_json_file(path)?,
        None => TemplateConfig::default(),
    };
    cfg.validate()?;
    let tokenizer = Tokenizer::from_spec(tokenizer_spec)?;
    let variants = read_joined(joined)?;
    // Rendering is a pure per-variant function; collect preserves order.
    let annotations = variants
        .par_iter()
        .map(|v| render_annotation(v, &cfg, &tokenizer))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(write_annotations(out, &annotations)?)
}

pub fn stats(annotations: &Path, bin_width: u32) -> Result<TokenStats, CliError> {
    let counts = read_annotations(annotations)?
        .map(|r| r.map(|a| a.token_count))
        .collect::<Result<Vec<_>, _>>()?;
    summarize_tokens(counts, bin_width).map_err(|e| CliError::Data(e.to_string()))
}

// ---------------------------------------------------------------------------
// embed + cost estimate
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn embed(
    annotations_path: &Path,
    backend_spec: &str,
    limits: BatchLimits,
    inflight: usize,
    journal: Option<&Path>,
    out: &Path,
    records_per_shard: u64,
    dtype: Dtype,
    normalize: bool,
) -> Result<EmbedRunReport, CliError> {
    let backend_cfg = BackendConfig::from_spec(backend_spec)?;
    let backend = backend_cfg.build()?;
    let annotations = read_annotations(annotations_path)?.collect::<Result<Vec<_>, _>>()?;
    let opts = EmbedRunOptions {
        limits,
        inflight,
        journal_path: journal.map(Path::to_path_buf),
        out_dir: out.to_path_buf(),
        records_per_shard,
        dtype,
        normalize,
    };
    Ok(run_embedding(annotations, backend.as_ref(), &opts)?)
}

pub fn estimate_cost(
    annotations: &Path,
    price_per_million_tokens: f64,
) -> Result<varembed_core::embed::runner::CostEstimate, CliError> {
    let mut total_tokens = 0u64;
    for row in read_annotations(annotations)? {
        total_tokens += row?.token_count as u64;
    }
    Ok(cost_estimate(total_tokens, price_per_million_tokens))
}

// ---------------------------------------------------------------------------
// store maintenance
// ---------------------------------------------------------------------------

fn store_action(action: StoreAction, logger: &Logger) -> Result<(), CliError> {
    match action {
        StoreAction::Verify { dir } => {
            let store = EmbeddingStore::open(&dir)?;
            let report = store.verify()?;
            emit_json(None, &report)?;
            Ok(())
        }
        StoreAction::Export { store, format, out } => {
            let store = EmbeddingStore::open(&store)?;
            let file = File::create(&out)?;
            let n = match format.as_str() {
                "jsonl" => export_jsonl(&store, file)?,
                "tsv" => export_tsv(&store, file)?,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown export format {other:?}; expected jsonl|tsv"
                    )))
                }
            };
            logger.info("store", "exported", &[("records", json!(n))]);
            Ok(())
        }
        StoreAction::Import {
            from,
            out,
            records_per_shard,
            dtype,
            model_id,
            key_kind,
        } => {
            let key_kind = match key_kind.as_str() {
                "variant" => KeyKind::Variant,
                "sample" => KeyKind::Sample,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown key kind {other:?}; expected variant|sample"
                    )))
                }
            };
            let manifest = import_jsonl(
                BufReader::new(File::open(&from)?),
                &out,
                records_per_shard,
                parse_dtype(&dtype)?,
                key_kind,
                &model_id,
            )?;
            logger.info(
                "store",
                "imported",
                &[("records", json!(manifest.record_count))],
            );
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// aggregate
// ---------------------------------------------------------------------------

pub fn load_dosage_matrix(
    dosages: &Path,
    keys_file: Option<&Path>,
) -> Result<DosageMatrix, CliError> {
    if dosages.extension().and_then(|e| e.to_str()) == Some("tsv") {
        return Ok(DosageMatrix::read_tsv(dosages)?);
    }
    let keys_file = keys_file.ok_or_else(|| {
        CliError::Config("binary dosage input needs --keys <file> with one key per line".into())
    })?;
    let keys = std::fs::read_to_string(keys_file)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<VariantKey>()
                .map_err(|e| CliError::Data(format!("keys file: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DosageMatrix::read_binary(dosages, keys)?)
}

pub fn aggregate(
    dosages: &Path,
    store_dir: &Path,
    keys_file: Option<&Path>,
    policy: &str,
    sum: bool,
    out: &Path,
    chunk_variants: usize,
) -> Result<serde_json::Value, CliError> {
    let policy = MissingPolicy::parse(policy)
        .ok_or_else(|| CliError::Config(format!("unknown policy {policy:?}")))?;
    let normalization = if sum {
        Normalization::Sum
    } else {
        Normalization::WeightedMean
    };
    let matrix = load_dosage_matrix(dosages, keys_file)?;
    let store = EmbeddingStore::open(store_dir)?;
    let result = aggregate_cohort(&matrix, &store, policy, normalization, chunk_variants)?;

    let failed = result
        .status
        .iter()
        .filter(|s| **s == SampleStatus::AllZeroDosage)
        .count();
    let model_id = format!("aggregated:{}", store.model_id());

    if out.extension().and_then(|e| e.to_str()) == Some("tsv") {
        let mut w = BufWriter::new(File::create(out)?);
        for (sample, embedding) in result.sample_ids.iter().zip(&result.embeddings) {
            match embedding {
                Some(values) => {
                    write!(w, "{sample}")?;
                    for v in values {
                        write!(w, "\t{v}")?;
                    }
                    writeln!(w)?;
                }
                None => writeln!(w, "{sample}\tALL_ZERO_DOSAGE")?,
            }
        }
        w.flush()?;
    } else {
        // Individual embeddings reuse the shard format keyed by sample id.
        let mut ordered: Vec<(String, Vec<f64>)> = result
            .sample_ids
            .iter()
            .zip(&result.embeddings)
            .filter_map(|(id, e)| e.as_ref().map(|v| (id.clone(), v.clone())))
            .collect();
        ordered.sort_by(|a, b| a.0.cmp(&b.0));
        let mut writer = ShardWriter::create(out, 1_000_000, Dtype::F32, KeyKind::Sample)?;
        for (sample, values) in ordered {
            let vector =
                EmbeddingVector::new(values.iter().map(|v| *v as f32).collect(), model_id.clone())
                    .map_err(|e| CliError::Data(e.to_string()))?;
            writer.push(&sample, &vector)?;
        }
        writer.finish(&model_id)?;
    }

    Ok(json!({
        "samples": result.sample_ids.len(),
        "variants": matrix.n_variants(),
        "all_zero_dosage": failed,
    }))
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn eval(
    store_dir: &Path,
    task: &str,
    n_train: usize,
    seed: u64,
    trees: usize,
    max_depth: usize,
    out: &Path,
    confusion: Option<&Path>,
) -> Result<EvalReport, CliError> {
    let task =
        EvalTask::parse(task).ok_or_else(|| CliError::Config(format!("unknown task {task:?}")))?;
    let store = EmbeddingStore::open(store_dir)?;
    let hp = ForestHyperparams {
        n_trees: trees,
        max_depth,
        seed,
        ..ForestHyperparams::default()
    };
    let report = evaluate_task(&store, task, n_train, seed, hp)?;
    varembed_core::eval::write_report_json(&report, out)?;
    if let Some(path) = confusion {
        let mut f = BufWriter::new(File::create(path)?);
        report
            .write_confusion_tsv(&mut f)
            .map_err(|e| CliError::Data(e.to_string()))?;
        f.flush()?;
    }
    Ok(report)
}

/// Resolve a possibly relative path against a base directory.
pub fn resolve_under(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
