//! Renders joined variants into semantic text descriptions.
//!
//! Rendering is a pure function of `(JoinedVariant, TemplateConfig)`.
//! The wording below is pinned by golden-file tests; changing any phrase
//! requires regenerating the goldens, which is deliberate friction. The
//! identity sentence always embeds chromosome, position, ref, and alt as
//! substrings; that property is what makes the baseline prediction
//! tasks solvable from the rendered text alone.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AnnotationText, GencodeCategory, JoinedVariant, MetaSvmPrediction, Rsid, VariantKey,
};
use crate::tokenizer::{Tokenizer, TokenizerError};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("the Identity section must come first and cannot be omitted")]
    IdentityNotFirst,
    #[error("duplicate section {0:?} in section_order")]
    DuplicateSection(String),
    #[error("tokenizer error: {0}")]
    Tokenizer(#[from] TokenizerError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid template config: {0}")]
    Config(String),
    #[error("line {line}: {source}")]
    Json {
        line: u64,
        source: serde_json::Error,
    },
}

/// Sections of a rendered annotation, in their default order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Section {
    Identity,
    Gencode,
    Scores,
    Regulatory,
    Clinical,
    Gwas,
}

/// Controls what a rendered annotation includes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub section_order: Vec<Section>,
    /// When true, absent optional fields produce no sentence; when false,
    /// they produce an explicit "not available" clause.
    pub omit_missing: bool,
    /// Cap on listed ClinVar conditions per record; the rest fold into an
    /// "and N more" tail.
    pub max_conditions: usize,
    /// Cap on rendered GWAS trait associations per variant.
    pub max_traits: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            section_order: vec![
                Section::Identity,
                Section::Gencode,
                Section::Scores,
                Section::Regulatory,
                Section::Clinical,
                Section::Gwas,
            ],
            omit_missing: true,
            max_conditions: 5,
            max_traits: 5,
        }
    }
}

impl TemplateConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.section_order.first() != Some(&Section::Identity) {
            return Err(AnnotateError::IdentityNotFirst);
        }
        for (i, s) in self.section_order.iter().enumerate() {
            if self.section_order[..i].contains(s) {
                return Err(AnnotateError::DuplicateSection(format!("{s:?}")));
            }
        }
        if self.max_conditions == 0 || self.max_traits == 0 {
            return Err(AnnotateError::Config(
                "max_conditions and max_traits must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TemplateConfig =
            serde_json::from_str(&text).map_err(|e| AnnotateError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Render the semantic description for one joined variant.
pub fn render_text(v: &JoinedVariant, cfg: &TemplateConfig) -> String {
    let mut sentences: Vec<String> = Vec::new();
    for section in &cfg.section_order {
        match section {
            Section::Identity => render_identity(v, &mut sentences),
            Section::Gencode => render_gencode(v, &mut sentences),
            Section::Scores => render_scores(v, cfg, &mut sentences),
            Section::Regulatory => render_regulatory(v, cfg, &mut sentences),
            Section::Clinical => render_clinical(v, cfg, &mut sentences),
            Section::Gwas => render_gwas(v, cfg, &mut sentences),
        }
    }
    sentences.join(" ")
}

/// Render and token-count one joined variant.
pub fn render_annotation(
    v: &JoinedVariant,
    cfg: &TemplateConfig,
    tokenizer: &Tokenizer,
) -> Result<AnnotationText, AnnotateError> {
    let text = render_text(v, cfg);
    let token_count = tokenizer.count(&text)?;
    Ok(AnnotationText {
        key: v.key.clone(),
        text,
        token_count,
    })
}

fn render_identity(v: &JoinedVariant, out: &mut Vec<String>) {
    let key = &v.key;
    let kind = if key.is_snv() {
        "single-nucleotide variant"
    } else {
        "insertion-deletion variant"
    };
    let rsid_part = match &key.rsid {
        Some(rsid) => format!(" ({rsid})"),
        None => String::new(),
    };
    out.push(format!(
        "Variant {key}{rsid_part} is a {kind} on chromosome {chrom} at position {pos} \
         with reference allele {r} and alternate allele {a} on the GRCh38 build.",
        chrom = key.chromosome,
        pos = key.position,
        r = key.ref_allele,
        a = key.alt_allele,
    ));
}

fn render_gencode(v: &JoinedVariant, out: &mut Vec<String>) {
    use GencodeCategory::*;
    let gene = &v.functional.gencode_info;
    let sentence = match v.functional.gencode_category {
        Intergenic => format!("GENCODE classifies it as intergenic; the nearby gene is {gene}."),
        Missense => format!("GENCODE classifies it as a missense variant affecting {gene}."),
        Synonymous => format!("GENCODE classifies it as a synonymous variant in {gene}."),
        StopGain => format!("GENCODE classifies it as a stop-gain variant in {gene}."),
        StopLoss => format!("GENCODE classifies it as a stop-loss variant in {gene}."),
        Frameshift => format!("GENCODE classifies it as a frameshift variant in {gene}."),
        InframeIndel => format!("GENCODE classifies it as an in-frame indel in {gene}."),
        Exonic => format!("GENCODE classifies it as an exonic variant in {gene}."),
        Splicing => format!("GENCODE classifies it as a splice-site variant in {gene}."),
        Utr5 => format!("GENCODE places it in the 5' untranslated region of {gene}."),
        Utr3 => format!("GENCODE places it in the 3' untranslated region of {gene}."),
        Intronic => format!("GENCODE places it in an intron of {gene}."),
        NcRnaExonic => format!("GENCODE places it in a noncoding RNA exon of {gene}."),
        NcRnaIntronic => format!("GENCODE places it in a noncoding RNA intron of {gene}."),
        Upstream => format!("GENCODE places it immediately upstream of {gene}."),
        Downstream => format!("GENCODE places it immediately downstream of {gene}."),
    };
    out.push(sentence);
}

fn render_scores(v: &JoinedVariant, cfg: &TemplateConfig, out: &mut Vec<String>) {
    match v.functional.metasvm {
        Some(MetaSvmPrediction::Deleterious) => {
            out.push("MetaSVM predicts the variant to be deleterious.".to_string());
        }
        Some(MetaSvmPrediction::Tolerated) => {
            out.push("MetaSVM predicts the variant to be tolerated.".to_string());
        }
        None if !cfg.omit_missing => {
            out.push("A MetaSVM pathogenicity prediction is not available.".to_string());
        }
        None => {}
    }
    match v.functional.cadd_phred {
        Some(score) => {
            out.push(format!(
                "The CADD Phred-scaled deleteriousness score is {score:.1}."
            ));
        }
        None if !cfg.omit_missing => {
            out.push("A CADD deleteriousness score is not available.".to_string());
        }
        None => {}
    }
}

fn render_regulatory(v: &JoinedVariant, cfg: &TemplateConfig, out: &mut Vec<String>) {
    match &v.functional.cage {
        Some(label) => out.push(format!(
            "CAGE evidence indicates {label} activity at this site."
        )),
        None if !cfg.omit_missing => {
            out.push("CAGE promoter or enhancer evidence is not available.".to_string())
        }
        None => {}
    }
    match &v.functional.rdhs {
        Some(label) => out.push(format!(
            "The site overlaps a representative DNase I hypersensitive site ({label})."
        )),
        None if !cfg.omit_missing => out.push(
            "A representative DNase I hypersensitive site annotation is not available.".to_string(),
        ),
        None => {}
    }
    match &v.functional.genehancer {
        Some(label) => out.push(format!("GeneHancer predicts an enhancer here ({label}).")),
        None if !cfg.omit_missing => {
            out.push("A GeneHancer enhancer prediction is not available.".to_string())
        }
        None => {}
    }
}

fn render_clinical(v: &JoinedVariant, cfg: &TemplateConfig, out: &mut Vec<String>) {
    if v.clinvar.is_empty() {
        if !cfg.omit_missing {
            out.push("No ClinVar clinical classification is available.".to_string());
        }
        return;
    }
    for record in &v.clinvar {
        let significance = record.clinical_significance.label();
        let review = format!(
            "review status: {}; {}",
            record.review_status.description,
            star_phrase(record.review_status.stars)
        );
        if record.conditions.is_empty() {
            out.push(format!(
                "ClinVar classifies this variant as {significance} ({review})."
            ));
        } else {
            let listed = list_with_cap(&record.conditions, cfg.max_conditions, "conditions");
            out.push(format!(
                "ClinVar classifies this variant as {significance} for {listed} ({review})."
            ));
        }
    }
}

fn render_gwas(v: &JoinedVariant, cfg: &TemplateConfig, out: &mut Vec<String>) {
    if v.gwas.is_empty() {
        if !cfg.omit_missing {
            out.push("No GWAS trait associations have been reported.".to_string());
        }
        return;
    }
    for assoc in v.gwas.iter().take(cfg.max_traits) {
        let detail = match (&assoc.p_value, &assoc.study_ref) {
            (Some(p), Some(s)) => format!(" (p = {p:.1e}; {s})"),
            (Some(p), None) => format!(" (p = {p:.1e})"),
            (None, Some(s)) => format!(" ({s})"),
            (None, None) => String::new(),
        };
        out.push(format!(
            "A genome-wide association study links it to {}{detail}.",
            assoc.trait_name
        ));
    }
    let extra = v.gwas.len().saturating_sub(cfg.max_traits);
    if extra > 0 {
        out.push(format!(
            "GWAS results report {extra} more trait association{}.",
            if extra == 1 { "" } else { "s" }
        ));
    }
}

fn star_phrase(stars: u8) -> String {
    format!("{stars} star{}", if stars == 1 { "" } else { "s" })
}

/// "A", "A and B", "A, B, and C", or "A, B, and 3 more conditions".
fn list_with_cap(items: &[String], cap: usize, noun: &str) -> String {
    let shown = items.len().min(cap);
    let extra = items.len() - shown;
    let mut parts: Vec<&str> = items[..shown].iter().map(String::as_str).collect();
    let tail = if extra > 0 {
        Some(format!("{extra} more {noun}"))
    } else {
        None
    };
    match (parts.len(), tail) {
        (1, None) => parts[0].to_string(),
        (2, None) => format!("{} and {}", parts[0], parts[1]),
        (_, None) => {
            let last = parts.pop().expect("non-empty");
            format!("{}, and {last}", parts.join(", "))
        }
        (1, Some(t)) => format!("{} and {t}", parts[0]),
        (_, Some(t)) => format!("{}, and {t}", parts.join(", ")),
    }
}

// ---------------------------------------------------------------------------
// Annotation JSON-lines interchange
// ---------------------------------------------------------------------------

/// One line of the annotation JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub key: VariantKey,
    pub rsid: Option<Rsid>,
    pub text: String,
    pub tokens: u32,
}

impl From<AnnotationText> for AnnotationRow {
    fn from(a: AnnotationText) -> Self {
        let rsid = a.key.rsid.clone();
        AnnotationRow {
            key: a.key,
            rsid,
            text: a.text,
            tokens: a.token_count,
        }
    }
}

impl From<AnnotationRow> for AnnotationText {
    fn from(row: AnnotationRow) -> Self {
        let mut key = row.key;
        key.rsid = row.rsid;
        AnnotationText {
            key,
            text: row.text,
            token_count: row.tokens,
        }
    }
}

/// Write annotations as JSON lines.
pub fn write_annotations<'a>(
    path: impl AsRef<Path>,
    annotations: impl IntoIterator<Item = &'a AnnotationText>,
) -> Result<u64, AnnotateError> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut n = 0u64;
    for a in annotations {
        let row = AnnotationRow::from(a.clone());
        serde_json::to_writer(&mut out, &row).map_err(|source| AnnotateError::Json {
            line: n + 1,
            source,
        })?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

/// Stream annotations from a JSON-lines file.
pub fn read_annotations(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = Result<AnnotationText, AnnotateError>>, AnnotateError> {
    let reader = BufReader::new(File::open(path)?);
    let mut line_no = 0u64;
    Ok(reader.lines().filter_map(move |line| {
        line_no += 1;
        match line {
            Err(e) => Some(Err(AnnotateError::Io(e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(
                serde_json::from_str::<AnnotationRow>(&l)
                    .map(AnnotationText::from)
                    .map_err(|source| AnnotateError::Json {
                        line: line_no,
                        source,
                    }),
            ),
        }
    }))
}
