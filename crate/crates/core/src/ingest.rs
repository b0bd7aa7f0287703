//! Streaming parsers for FAVOR-, ClinVar-, and GWAS Catalog-style tables.
//!
//! All three public databases ship as delimiter-separated text (optionally
//! gzipped), but their exact headers drift between releases, so the column
//! layout is declared in a [`SourceSchema`] instead of being hardcoded.
//! Parsers buffer a single row at a time; peak memory is independent of
//! input size.
//!
//! Malformed rows are skipped and counted per reason under the default
//! lenient mode, or abort the parse under strict mode. Genome-scale dumps
//! always contain stragglers; the skip report keeps them visible.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Allele, Chromosome, ClinVarRecord, ClinicalSignificance, FunctionalAnnotation, GencodeCategory,
    GwasAssociation, MetaSvmPrediction, ReviewStatus, Rsid, VariantKey,
};
use crate::recfile::GwasRow;

/// Built-in ClinVar review-status wording to star-tier mapping. Kept as
/// data rather than code so it can track upstream wording changes; an
/// external file in the same format overrides it.
pub const DEFAULT_STAR_MAP: &str = include_str!("../data/clinvar_review_stars.tsv");

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("line {line}: malformed row ({reason})")]
    MalformedRow { line: u64, reason: String },
    #[error("invalid star map line {0}: expected \"<stars>\\t<description>\"")]
    StarMap(u64),
}

/// Which source database a schema describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Favor,
    Clinvar,
    GwasCatalog,
}

impl SourceKind {
    fn mandatory_fields(&self) -> &'static [&'static str] {
        match self {
            SourceKind::Favor => &[
                "chromosome",
                "position",
                "ref",
                "alt",
                "gencode_category",
                "gencode_info",
            ],
            SourceKind::Clinvar => &[
                "chromosome",
                "position",
                "ref",
                "alt",
                "significance",
                "review_status",
            ],
            SourceKind::GwasCatalog => &["trait"],
        }
    }
}

/// A column reference: positional index or header name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

/// Declared layout of one source file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSchema {
    pub source_kind: SourceKind,
    #[serde(
        serialize_with = "ser_delimiter",
        deserialize_with = "de_delimiter",
        default = "default_delimiter"
    )]
    pub delimiter: u8,
    pub has_header: bool,
    pub column_map: BTreeMap<String, ColumnRef>,
}

fn default_delimiter() -> u8 {
    b'\t'
}

fn ser_delimiter<S: serde::Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&(*d as char).to_string())
}

fn de_delimiter<'de, D: serde::Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
    let raw = String::deserialize(d)?;
    let mut bytes = raw.bytes();
    match (bytes.next(), bytes.next()) {
        (Some(b), None) => Ok(b),
        _ => Err(serde::de::Error::custom("delimiter must be a single byte")),
    }
}

impl SourceSchema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        let schema: SourceSchema =
            serde_json::from_str(&text).map_err(|e| IngestError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Check mandatory logical fields are mapped and that index references
    /// are used when there is no header to resolve names against.
    pub fn validate(&self) -> Result<(), IngestError> {
        for field in self.source_kind.mandatory_fields() {
            if !self.column_map.contains_key(*field) {
                return Err(IngestError::Schema(format!(
                    "missing mandatory field {field:?} for {:?}",
                    self.source_kind
                )));
            }
        }
        if !self.has_header {
            for (field, col) in &self.column_map {
                if matches!(col, ColumnRef::Name(_)) {
                    return Err(IngestError::Schema(format!(
                        "field {field:?} references a header name but has_header is false"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-parse accounting: every input row is either valid or skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub total: u64,
    pub valid: u64,
    pub skipped: u64,
    /// Skip reason -> row count.
    pub reasons: BTreeMap<String, u64>,
    /// Non-fatal oddities (e.g. out-of-range p-values dropped to None).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub warnings: BTreeMap<String, u64>,
    /// Typed records emitted; exceeds `valid` when multi-allelic rows
    /// decompose into several records.
    pub records: u64,
}

impl SkipReport {
    fn skip(&mut self, reason: &str) {
        self.skipped += 1;
        *self.reasons.entry(reason.to_string()).or_insert(0) += 1;
    }

    fn warn(&mut self, what: &str) {
        *self.warnings.entry(what.to_string()).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Abort on the first malformed row instead of skip-and-count.
    pub strict: bool,
}

/// Open a source file, transparently decompressing gzip based on the
/// magic bytes rather than the file name.
pub fn open_input(path: impl AsRef<Path>) -> io::Result<Box<dyn BufRead + Send>> {
    let mut reader = BufReader::new(File::open(path)?);
    let magic = reader.fill_buf()?;
    if magic.len() >= 2 && magic[0] == 0x1f && magic[1] == 0x8b {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Missing-value sentinel: "." or empty field maps to None uniformly.
fn non_missing(field: &str) -> Option<&str> {
    let t = field.trim();
    if t.is_empty() || t == "." {
        None
    } else {
        Some(t)
    }
}

/// Resolved column indices for one schema against one file.
struct Columns {
    by_field: BTreeMap<String, usize>,
    max_index: usize,
}

impl Columns {
    fn resolve(schema: &SourceSchema, header: Option<&[String]>) -> Result<Self, IngestError> {
        let mut by_field = BTreeMap::new();
        for (field, col) in &schema.column_map {
            let idx = match col {
                ColumnRef::Index(i) => *i,
                ColumnRef::Name(name) => {
                    let header = header.ok_or_else(|| {
                        IngestError::Schema("header names need has_header".into())
                    })?;
                    header.iter().position(|h| h == name).ok_or_else(|| {
                        IngestError::Schema(format!("header column {name:?} not found"))
                    })?
                }
            };
            by_field.insert(field.clone(), idx);
        }
        let max_index = by_field.values().copied().max().unwrap_or(0);
        Ok(Columns {
            by_field,
            max_index,
        })
    }

    fn get<'a>(&self, fields: &'a [String], name: &str) -> Option<&'a str> {
        self.by_field
            .get(name)
            .and_then(|&i| fields.get(i))
            .and_then(|f| non_missing(f))
    }
}

/// Row-level machinery shared by the three parsers: line reading,
/// field splitting, skip accounting, strict-mode abort.
struct RowReader<R: BufRead> {
    lines: io::Lines<R>,
    delimiter: u8,
    line_no: u64,
    columns: Columns,
    opts: ParseOptions,
    report: SkipReport,
    done: bool,
}

impl<R: BufRead> RowReader<R> {
    fn new(reader: R, schema: &SourceSchema, opts: ParseOptions) -> Result<Self, IngestError> {
        schema.validate()?;
        let mut lines = reader.lines();
        let mut line_no = 0;
        let header = if schema.has_header {
            line_no += 1;
            let line = lines
                .next()
                .ok_or_else(|| IngestError::Schema("empty file but has_header".into()))??;
            Some(split_fields(&line, schema.delimiter))
        } else {
            None
        };
        let columns = Columns::resolve(schema, header.as_deref())?;
        Ok(RowReader {
            lines,
            delimiter: schema.delimiter,
            line_no,
            columns,
            opts,
            report: SkipReport::default(),
            done: false,
        })
    }

    /// Next data row as split fields, or None at end of stream. Rows with
    /// too few columns are handled here; per-field validation is the
    /// caller's job via `skip`.
    fn next_fields(&mut self) -> Option<Result<(u64, Vec<String>), IngestError>> {
        if self.done {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            self.line_no += 1;
            if line.is_empty() {
                continue; // blank lines are not rows
            }
            self.report.total += 1;
            let fields = split_fields(&line, self.delimiter);
            if fields.len() <= self.columns.max_index {
                match self.skip("column_count") {
                    Ok(()) => continue,
                    Err(e) => return Some(Err(e)),
                }
            }
            return Some(Ok((self.line_no, fields)));
        }
    }

    /// Record a skipped row; under strict mode this is fatal.
    fn skip(&mut self, reason: &str) -> Result<(), IngestError> {
        if self.opts.strict {
            self.done = true;
            return Err(IngestError::MalformedRow {
                line: self.line_no,
                reason: reason.to_string(),
            });
        }
        self.report.skip(reason);
        Ok(())
    }
}

fn split_fields(line: &str, delimiter: u8) -> Vec<String> {
    line.split(delimiter as char).map(str::to_string).collect()
}

/// Parse the shared positional identity columns. Multi-allelic rows
/// (comma-separated alt) decompose into one key per alternate allele.
fn parse_keys(columns: &Columns, fields: &[String]) -> Result<Vec<VariantKey>, &'static str> {
    let chrom_raw = columns.get(fields, "chromosome").ok_or("chromosome")?;
    let chromosome = Chromosome::parse(chrom_raw).map_err(|_| "chromosome")?;
    let position: u64 = columns
        .get(fields, "position")
        .ok_or("position")?
        .parse()
        .map_err(|_| "position")?;
    let ref_allele =
        Allele::parse(columns.get(fields, "ref").ok_or("ref_allele")?).map_err(|_| "ref_allele")?;
    let rsid = match columns.get(fields, "rsid") {
        Some(raw) => Some(Rsid::parse(raw).map_err(|_| "rsid")?),
        None => None,
    };
    let alt_raw = columns.get(fields, "alt").ok_or("alt_allele")?;
    let mut keys = Vec::new();
    for alt_part in alt_raw.split(',') {
        let alt = Allele::parse(alt_part).map_err(|_| "alt_allele")?;
        let key = VariantKey::new(chromosome, position, ref_allele.clone(), alt, rsid.clone())
            .map_err(|_| "alt_allele")?;
        keys.push(key);
    }
    Ok(keys)
}

// ---------------------------------------------------------------------------
// FAVOR
// ---------------------------------------------------------------------------

/// Streaming FAVOR parser yielding `(VariantKey, FunctionalAnnotation)`.
pub struct FavorParser<R: BufRead> {
    rows: RowReader<R>,
    pending: Vec<(VariantKey, FunctionalAnnotation)>,
}

impl<R: BufRead> FavorParser<R> {
    pub fn new(reader: R, schema: &SourceSchema, opts: ParseOptions) -> Result<Self, IngestError> {
        if schema.source_kind != SourceKind::Favor {
            return Err(IngestError::Schema("schema is not a favor schema".into()));
        }
        Ok(FavorParser {
            rows: RowReader::new(reader, schema, opts)?,
            pending: Vec::new(),
        })
    }

    pub fn report(&self) -> &SkipReport {
        &self.rows.report
    }

    pub fn into_report(self) -> SkipReport {
        self.rows.report
    }

    fn parse_row(
        columns: &Columns,
        fields: &[String],
    ) -> Result<Vec<(VariantKey, FunctionalAnnotation)>, &'static str> {
        let keys = parse_keys(columns, fields)?;
        let category_raw = columns
            .get(fields, "gencode_category")
            .ok_or("gencode_category")?;
        let gencode_category = GencodeCategory::parse(category_raw).ok_or("gencode_category")?;
        let gencode_info = columns
            .get(fields, "gencode_info")
            .ok_or("gencode_info")?
            .to_string();
        let metasvm = match columns.get(fields, "metasvm") {
            Some(raw) => Some(MetaSvmPrediction::parse(raw).ok_or("metasvm")?),
            None => None,
        };
        let cadd_phred = match columns.get(fields, "cadd_phred") {
            Some(raw) => {
                let score: f64 = raw.parse().map_err(|_| "cadd_phred")?;
                if !score.is_finite() || score < 0.0 {
                    return Err("cadd_phred");
                }
                Some(score)
            }
            None => None,
        };
        let annotation = FunctionalAnnotation {
            gencode_category,
            gencode_info,
            metasvm,
            cadd_phred,
            cage: columns.get(fields, "cage").map(str::to_string),
            genehancer: columns.get(fields, "genehancer").map(str::to_string),
            rdhs: columns.get(fields, "rdhs").map(str::to_string),
        };
        Ok(keys.into_iter().map(|k| (k, annotation.clone())).collect())
    }
}

impl<R: BufRead> Iterator for FavorParser<R> {
    type Item = Result<(VariantKey, FunctionalAnnotation), IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(rec) = self.pending.pop() {
                return Some(Ok(rec));
            }
            let (_, fields) = match self.rows.next_fields()? {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            match Self::parse_row(&self.rows.columns, &fields) {
                Ok(mut recs) => {
                    self.rows.report.valid += 1;
                    self.rows.report.records += recs.len() as u64;
                    recs.reverse(); // pop() restores input order
                    self.pending = recs;
                }
                Err(reason) => {
                    if let Err(e) = self.rows.skip(reason) {
                        return Some(Err(e));
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ClinVar
// ---------------------------------------------------------------------------

/// Maps ClinVar review-status wording to star tiers 0-4.
#[derive(Debug, Clone)]
pub struct StarMap {
    entries: BTreeMap<String, u8>,
}

impl StarMap {
    /// The mapping shipped with the crate.
    pub fn built_in() -> Self {
        StarMap::from_reader(DEFAULT_STAR_MAP.as_bytes()).expect("built-in star map must parse")
    }

    /// Load a `stars<TAB>description` file, one entry per line; `#` lines
    /// are comments.
    pub fn from_reader(reader: impl Read) -> Result<Self, IngestError> {
        let mut entries = BTreeMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (stars_raw, desc) = trimmed
                .split_once('\t')
                .ok_or(IngestError::StarMap(i as u64 + 1))?;
            let stars: u8 = stars_raw
                .parse()
                .map_err(|_| IngestError::StarMap(i as u64 + 1))?;
            if stars > 4 {
                return Err(IngestError::StarMap(i as u64 + 1));
            }
            entries.insert(Self::normalize(desc), stars);
        }
        Ok(StarMap { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        StarMap::from_reader(File::open(path)?)
    }

    fn normalize(desc: &str) -> String {
        desc.split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_ascii_lowercase()
    }

    pub fn stars_for(&self, description: &str) -> Option<u8> {
        self.entries.get(&Self::normalize(description)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Streaming ClinVar parser yielding `(VariantKey, ClinVarRecord)`.
pub struct ClinVarParser<R: BufRead> {
    rows: RowReader<R>,
    stars: StarMap,
    pending: Vec<(VariantKey, ClinVarRecord)>,
}

impl<R: BufRead> ClinVarParser<R> {
    pub fn new(
        reader: R,
        schema: &SourceSchema,
        stars: StarMap,
        opts: ParseOptions,
    ) -> Result<Self, IngestError> {
        if schema.source_kind != SourceKind::Clinvar {
            return Err(IngestError::Schema("schema is not a clinvar schema".into()));
        }
        Ok(ClinVarParser {
            rows: RowReader::new(reader, schema, opts)?,
            stars,
            pending: Vec::new(),
        })
    }

    pub fn report(&self) -> &SkipReport {
        &self.rows.report
    }

    pub fn into_report(self) -> SkipReport {
        self.rows.report
    }

    fn parse_row(
        columns: &Columns,
        stars: &StarMap,
        fields: &[String],
    ) -> Result<Vec<(VariantKey, ClinVarRecord)>, &'static str> {
        let keys = parse_keys(columns, fields)?;
        let significance_raw = columns.get(fields, "significance").ok_or("significance")?;
        let clinical_significance =
            ClinicalSignificance::parse(significance_raw).ok_or("significance")?;
        let review_raw = columns
            .get(fields, "review_status")
            .ok_or("review_status")?;
        let tier = stars.stars_for(review_raw).ok_or("review_status")?;
        let review_status = ReviewStatus::new(tier, review_raw).ok_or("review_status")?;
        let conditions: Vec<String> = columns
            .get(fields, "conditions")
            .map(|raw| {
                raw.split('|')
                    .map(str::trim)
                    .filter(|c| !c.is_empty() && *c != ".")
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        let record = ClinVarRecord {
            clinical_significance,
            conditions,
            review_status,
        };
        Ok(keys.into_iter().map(|k| (k, record.clone())).collect())
    }
}

impl<R: BufRead> Iterator for ClinVarParser<R> {
    type Item = Result<(VariantKey, ClinVarRecord), IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(rec) = self.pending.pop() {
                return Some(Ok(rec));
            }
            let (_, fields) = match self.rows.next_fields()? {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            match Self::parse_row(&self.rows.columns, &self.stars, &fields) {
                Ok(mut recs) => {
                    self.rows.report.valid += 1;
                    self.rows.report.records += recs.len() as u64;
                    recs.reverse();
                    self.pending = recs;
                }
                Err(reason) => {
                    if let Err(e) = self.rows.skip(reason) {
                        return Some(Err(e));
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// GWAS Catalog
// ---------------------------------------------------------------------------

/// Streaming GWAS Catalog parser yielding [`GwasRow`]s. Rows that carry
/// only an rsID are emitted without a positional key; the join resolves
/// them through its rsID index.
pub struct GwasParser<R: BufRead> {
    rows: RowReader<R>,
    pending: Vec<GwasRow>,
}

impl<R: BufRead> GwasParser<R> {
    pub fn new(reader: R, schema: &SourceSchema, opts: ParseOptions) -> Result<Self, IngestError> {
        if schema.source_kind != SourceKind::GwasCatalog {
            return Err(IngestError::Schema("schema is not a gwas schema".into()));
        }
        Ok(GwasParser {
            rows: RowReader::new(reader, schema, opts)?,
            pending: Vec::new(),
        })
    }

    pub fn report(&self) -> &SkipReport {
        &self.rows.report
    }

    pub fn into_report(self) -> SkipReport {
        self.rows.report
    }

    fn parse_row(
        columns: &Columns,
        fields: &[String],
        report: &mut SkipReport,
    ) -> Result<Vec<GwasRow>, &'static str> {
        let trait_name = columns.get(fields, "trait").ok_or("trait")?.to_string();
        let p_value = match columns.get(fields, "p_value") {
            Some(raw) => {
                let p: f64 = raw.parse().map_err(|_| "p_value")?;
                if p > 0.0 && p <= 1.0 {
                    Some(p)
                } else {
                    report.warn("p_value_out_of_range");
                    None
                }
            }
            None => None,
        };
        let study_ref = columns.get(fields, "study_ref").map(str::to_string);
        let association = GwasAssociation {
            trait_name,
            p_value,
            study_ref,
        };

        let has_positional = ["chromosome", "position", "ref", "alt"]
            .iter()
            .all(|f| columns.get(fields, f).is_some());
        if has_positional {
            let keys = parse_keys(columns, fields)?;
            Ok(keys
                .into_iter()
                .map(|key| GwasRow {
                    rsid: key.rsid.clone(),
                    key: Some(key),
                    association: association.clone(),
                })
                .collect())
        } else {
            let rsid_raw = columns.get(fields, "rsid").ok_or("missing_key")?;
            let rsid = Rsid::parse(rsid_raw).map_err(|_| "rsid")?;
            Ok(vec![GwasRow {
                key: None,
                rsid: Some(rsid),
                association,
            }])
        }
    }
}

impl<R: BufRead> Iterator for GwasParser<R> {
    type Item = Result<GwasRow, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(rec) = self.pending.pop() {
                return Some(Ok(rec));
            }
            let (_, fields) = match self.rows.next_fields()? {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            let mut report = std::mem::take(&mut self.rows.report);
            let parsed = Self::parse_row(&self.rows.columns, &fields, &mut report);
            self.rows.report = report;
            match parsed {
                Ok(mut recs) => {
                    self.rows.report.valid += 1;
                    self.rows.report.records += recs.len() as u64;
                    recs.reverse();
                    self.pending = recs;
                }
                Err(reason) => {
                    if let Err(e) = self.rows.skip(reason) {
                        return Some(Err(e));
                    }
                }
            }
        }
    }
}
