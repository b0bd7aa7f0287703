//! Shared domain types: variant identity, annotation payloads, and
//! embedding vectors.
//!
//! All types here are immutable after construction and cheap to send
//! across threads. `VariantKey` carries the canonical identity of a
//! variant; its text form `CHROM-POS-REF-ALT` is the join key, shard
//! sort key, and CLI argument format everywhere else in the pipeline.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors from constructing or parsing domain types.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown chromosome label: {0:?}")]
    UnknownChromosome(String),
    #[error("position must be >= 1")]
    InvalidPosition,
    #[error("invalid allele {0:?}: expected non-empty string over A/C/G/T")]
    InvalidAllele(String),
    #[error("ref and alt allele are identical for an SNV: {0}")]
    IdenticalSnvAlleles(String),
    #[error("invalid rsID {0:?}: expected \"rs\" followed by digits")]
    InvalidRsid(String),
    #[error("malformed variant key {0:?}: expected CHROM-POS-REF-ALT")]
    MalformedKey(String),
    #[error("embedding vector contains a non-finite value at index {0}")]
    NonFiniteValue(usize),
    #[error("embedding vector must not be empty")]
    EmptyVector,
}

/// Canonical chromosome labels in rank order: autosomes 1-22, then X, Y, MT.
pub const CHROMOSOME_LABELS: [&str; 25] = [
    "1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12", "13", "14", "15", "16", "17",
    "18", "19", "20", "21", "22", "X", "Y", "MT",
];

/// One of the 25 canonical chromosomes, ordered 1..22 < X < Y < MT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chromosome(u8);

impl Chromosome {
    /// Parse a raw label, accepting the "chr" prefix and the "M" alias
    /// for the mitochondrion. Case-insensitive. Idempotent on canonical
    /// labels.
    pub fn parse(label: &str) -> Result<Self, ModelError> {
        let trimmed = label.trim();
        if trimmed.is_empty() {
            return Err(ModelError::UnknownChromosome(label.to_string()));
        }
        let stripped = trimmed
            .strip_prefix("chr")
            .or_else(|| trimmed.strip_prefix("CHR"))
            .or_else(|| trimmed.strip_prefix("Chr"))
            .unwrap_or(trimmed);
        let upper = stripped.to_ascii_uppercase();
        let canon = if upper == "M" { "MT" } else { upper.as_str() };
        CHROMOSOME_LABELS
            .iter()
            .position(|&l| l == canon)
            .map(|idx| Chromosome(idx as u8 + 1))
            .ok_or_else(|| ModelError::UnknownChromosome(label.to_string()))
    }

    /// Canonical label without any "chr" prefix; mitochondrion is "MT".
    pub fn label(&self) -> &'static str {
        CHROMOSOME_LABELS[(self.0 - 1) as usize]
    }

    /// Sort rank: 1-22 for autosomes, 23 = X, 24 = Y, 25 = MT.
    pub fn rank(&self) -> u8 {
        self.0
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        (1..=25).contains(&rank).then_some(Chromosome(rank))
    }

    pub fn is_autosome(&self) -> bool {
        self.0 <= 22
    }

    /// All 25 canonical chromosomes in rank order.
    pub fn all() -> impl Iterator<Item = Chromosome> {
        (1..=25).map(Chromosome)
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Chromosome {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Chromosome::parse(s)
    }
}

/// Normalize a raw chromosome label to its canonical form.
///
/// Reconciles "chr5" vs "5" and "M" vs "MT" across source files. Labels
/// outside the 25 canonical chromosomes (unplaced contigs, alt haplotypes)
/// are an error; the caller decides whether that means skip or fail.
pub fn normalize_chromosome(label: &str) -> Result<&'static str, ModelError> {
    Chromosome::parse(label).map(|c| c.label())
}

/// A non-empty uppercase allele string over {A, C, G, T}.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Allele(String);

impl Allele {
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        if raw.is_empty() {
            return Err(ModelError::InvalidAllele(raw.to_string()));
        }
        let upper = raw.to_ascii_uppercase();
        if upper
            .bytes()
            .all(|b| matches!(b, b'A' | b'C' | b'G' | b'T'))
        {
            Ok(Allele(upper))
        } else {
            Err(ModelError::InvalidAllele(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Allele {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Allele {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Allele::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// A dbSNP reference SNP identifier: "rs" followed by digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Rsid(String);

impl Rsid {
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        let rest = raw
            .strip_prefix("rs")
            .ok_or_else(|| ModelError::InvalidRsid(raw.to_string()))?;
        if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Rsid(raw.to_string()))
        } else {
            Err(ModelError::InvalidRsid(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Rsid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Rsid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Rsid::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Canonical identity of a variant on the GRCh38 build.
///
/// Equality, ordering, and hashing use only (chromosome, position, ref,
/// alt); the rsID is advisory metadata carried alongside the positional
/// identity. Ordering is chromosome rank, then position, then ref, then
/// alt.
#[derive(Debug, Clone)]
pub struct VariantKey {
    pub chromosome: Chromosome,
    /// 1-based coordinate.
    pub position: u64,
    pub ref_allele: Allele,
    pub alt_allele: Allele,
    pub rsid: Option<Rsid>,
}

impl VariantKey {
    pub fn new(
        chromosome: Chromosome,
        position: u64,
        ref_allele: Allele,
        alt_allele: Allele,
        rsid: Option<Rsid>,
    ) -> Result<Self, ModelError> {
        if position == 0 {
            return Err(ModelError::InvalidPosition);
        }
        // SNVs with identical alleles are not variants; longer alleles may
        // legitimately coincide in length without being equal.
        if ref_allele.len() == 1 && alt_allele.len() == 1 && ref_allele == alt_allele {
            return Err(ModelError::IdenticalSnvAlleles(format!(
                "{}-{}-{}-{}",
                chromosome, position, ref_allele, alt_allele
            )));
        }
        Ok(VariantKey {
            chromosome,
            position,
            ref_allele,
            alt_allele,
            rsid,
        })
    }

    /// Convenience constructor from raw strings.
    pub fn from_parts(
        chromosome: &str,
        position: u64,
        ref_allele: &str,
        alt_allele: &str,
        rsid: Option<&str>,
    ) -> Result<Self, ModelError> {
        VariantKey::new(
            Chromosome::parse(chromosome)?,
            position,
            Allele::parse(ref_allele)?,
            Allele::parse(alt_allele)?,
            rsid.map(Rsid::parse).transpose()?,
        )
    }

    /// An SNV has single-base ref and alt alleles; anything else is an indel.
    pub fn is_snv(&self) -> bool {
        self.ref_allele.len() == 1 && self.alt_allele.len() == 1
    }

    /// The same site with ref and alt exchanged. rsID is preserved.
    pub fn flipped(&self) -> VariantKey {
        VariantKey {
            chromosome: self.chromosome,
            position: self.position,
            ref_allele: self.alt_allele.clone(),
            alt_allele: self.ref_allele.clone(),
            rsid: self.rsid.clone(),
        }
    }

    /// With the rsID removed; useful for comparisons in tests.
    pub fn without_rsid(&self) -> VariantKey {
        VariantKey {
            rsid: None,
            ..self.clone()
        }
    }

    fn ord_tuple(&self) -> (u8, u64, &str, &str) {
        (
            self.chromosome.rank(),
            self.position,
            self.ref_allele.as_str(),
            self.alt_allele.as_str(),
        )
    }
}

impl PartialEq for VariantKey {
    fn eq(&self, other: &Self) -> bool {
        self.ord_tuple() == other.ord_tuple()
    }
}

impl Eq for VariantKey {}

impl PartialOrd for VariantKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VariantKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ord_tuple().cmp(&other.ord_tuple())
    }
}

impl Hash for VariantKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ord_tuple().hash(state);
    }
}

impl fmt::Display for VariantKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}-{}",
            self.chromosome, self.position, self.ref_allele, self.alt_allele
        )
    }
}

impl FromStr for VariantKey {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('-');
        let (chrom, pos, r, a) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(p), Some(r), Some(a)) if parts.next().is_none() => (c, p, r, a),
            _ => return Err(ModelError::MalformedKey(s.to_string())),
        };
        let position: u64 = pos
            .parse()
            .map_err(|_| ModelError::MalformedKey(s.to_string()))?;
        VariantKey::from_parts(chrom, position, r, a, None)
    }
}

impl Serialize for VariantKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VariantKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// GENCODE consequence category of a variant relative to gene transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GencodeCategory {
    Missense,
    Synonymous,
    StopGain,
    StopLoss,
    Frameshift,
    InframeIndel,
    Exonic,
    Splicing,
    Utr5,
    Utr3,
    Intronic,
    NcRnaExonic,
    NcRnaIntronic,
    Upstream,
    Downstream,
    Intergenic,
}

impl GencodeCategory {
    /// Parse the category strings used by FAVOR-style exports. Accepts a
    /// few common aliases ("nonsynonymous SNV" for missense, ANNOVAR-style
    /// "UTR5"/"UTR3").
    pub fn parse(raw: &str) -> Option<Self> {
        use GencodeCategory::*;
        let norm = raw.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Some(match norm.as_str() {
            "missense" | "nonsynonymous_snv" | "nonsynonymous" => Missense,
            "synonymous" | "synonymous_snv" => Synonymous,
            "stopgain" | "stop_gain" => StopGain,
            "stoploss" | "stop_loss" => StopLoss,
            "frameshift" | "frameshift_indel" => Frameshift,
            "inframe_indel" | "nonframeshift_indel" => InframeIndel,
            "exonic" => Exonic,
            "splicing" | "splice_site" => Splicing,
            "utr5" | "5utr" | "utr_5" => Utr5,
            "utr3" | "3utr" | "utr_3" => Utr3,
            "intronic" | "intron" => Intronic,
            "ncrna_exonic" => NcRnaExonic,
            "ncrna_intronic" => NcRnaIntronic,
            "upstream" => Upstream,
            "downstream" => Downstream,
            "intergenic" => Intergenic,
            _ => return None,
        })
    }

    /// Intergenic variants name the nearby gene rather than an impacted one.
    pub fn is_intergenic(&self) -> bool {
        matches!(self, GencodeCategory::Intergenic)
    }
}

/// Categorical MetaSVM pathogenicity prediction for missense variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaSvmPrediction {
    Deleterious,
    Tolerated,
}

impl MetaSvmPrediction {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "d" | "deleterious" => Some(MetaSvmPrediction::Deleterious),
            "t" | "tolerated" => Some(MetaSvmPrediction::Tolerated),
            _ => None,
        }
    }
}

/// FAVOR-derived functional annotation payload for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalAnnotation {
    pub gencode_category: GencodeCategory,
    /// The impacted gene, or the nearby gene for intergenic variants.
    pub gencode_info: String,
    pub metasvm: Option<MetaSvmPrediction>,
    /// Phred-scaled CADD deleteriousness score; finite and >= 0 when present.
    pub cadd_phred: Option<f64>,
    /// CAGE promoter/enhancer activity label.
    pub cage: Option<String>,
    /// GeneHancer predicted-enhancer label.
    pub genehancer: Option<String>,
    /// Representative DNase I hypersensitive site label.
    pub rdhs: Option<String>,
}

impl FunctionalAnnotation {
    pub fn validate(&self) -> bool {
        !self.gencode_info.is_empty() && self.cadd_phred.is_none_or(|s| s.is_finite() && s >= 0.0)
    }
}

/// ClinVar clinical significance labels. The set is closed: unknown
/// strings are a parse error, not a silent passthrough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClinicalSignificance {
    Pathogenic,
    LikelyPathogenic,
    UncertainSignificance,
    LikelyBenign,
    Benign,
    ConflictingClassifications,
    DrugResponse,
    RiskFactor,
    Association,
    Protective,
    Affects,
    NotProvided,
}

impl ClinicalSignificance {
    pub fn parse(raw: &str) -> Option<Self> {
        use ClinicalSignificance::*;
        let norm = raw
            .trim()
            .to_ascii_lowercase()
            .replace([' ', '-', '/'], "_");
        Some(match norm.as_str() {
            "pathogenic" => Pathogenic,
            "likely_pathogenic" => LikelyPathogenic,
            "uncertain_significance" | "vus" => UncertainSignificance,
            "likely_benign" => LikelyBenign,
            "benign" => Benign,
            "conflicting_classifications" | "conflicting_interpretations" => {
                ConflictingClassifications
            }
            "drug_response" => DrugResponse,
            "risk_factor" => RiskFactor,
            "association" => Association,
            "protective" => Protective,
            "affects" => Affects,
            "not_provided" => NotProvided,
            _ => return None,
        })
    }

    /// Human-readable label used in rendered annotations.
    pub fn label(&self) -> &'static str {
        use ClinicalSignificance::*;
        match self {
            Pathogenic => "pathogenic",
            LikelyPathogenic => "likely pathogenic",
            UncertainSignificance => "of uncertain significance",
            LikelyBenign => "likely benign",
            Benign => "benign",
            ConflictingClassifications => "of conflicting classifications",
            DrugResponse => "associated with drug response",
            RiskFactor => "a risk factor",
            Association => "an association",
            Protective => "protective",
            Affects => "trait-affecting",
            NotProvided => "not provided",
        }
    }
}

/// ClinVar review confidence: star tier 0-4 plus its textual description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewStatus {
    pub stars: u8,
    pub description: String,
}

impl ReviewStatus {
    pub fn new(stars: u8, description: impl Into<String>) -> Option<Self> {
        (stars <= 4).then(|| ReviewStatus {
            stars,
            description: description.into(),
        })
    }
}

/// One ClinVar assertion attached to a variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinVarRecord {
    pub clinical_significance: ClinicalSignificance,
    /// Disease conditions; may be empty, entries are non-empty strings.
    pub conditions: Vec<String>,
    pub review_status: ReviewStatus,
}

/// One GWAS Catalog trait association attached to a variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwasAssociation {
    pub trait_name: String,
    /// Association p-value in (0, 1] when present.
    pub p_value: Option<f64>,
    /// Publication identifier, e.g. a PubMed id.
    pub study_ref: Option<String>,
}

/// One variant's merged annotation payload from all three sources.
///
/// FAVOR is the base table, so `functional` is always present; the
/// ClinVar and GWAS lists may be empty. `flip_applied` marks that at
/// least one augmenting record matched only after ref/alt exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedVariant {
    pub key: VariantKey,
    pub functional: FunctionalAnnotation,
    pub clinvar: Vec<ClinVarRecord>,
    pub gwas: Vec<GwasAssociation>,
    pub flip_applied: bool,
}

/// A rendered semantic description plus its token count.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationText {
    pub key: VariantKey,
    pub text: String,
    pub token_count: u32,
}

/// A fixed-dimension embedding tagged with the backend that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>, model_id: impl Into<String>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyVector);
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteValue(idx));
        }
        Ok(EmbeddingVector {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}
