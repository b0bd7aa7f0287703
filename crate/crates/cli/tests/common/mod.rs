//! Test support for the CLI crate: paths into the shared fixture tree,
//! the pinned golden-variant set (mirroring the core crate's test
//! fixtures), and random variant generation.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use varembed_core::model::{
    Allele, Chromosome, ClinVarRecord, ClinicalSignificance, FunctionalAnnotation, GencodeCategory,
    GwasAssociation, JoinedVariant, MetaSvmPrediction, ReviewStatus, Rsid, VariantKey,
    CHROMOSOME_LABELS,
};

/// Path into the core crate's committed test fixtures.
pub fn core_testdata(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/testdata")
        .join(rel)
}

pub fn fixture(rel: &str) -> PathBuf {
    core_testdata(&format!("fixtures/{rel}"))
}

pub fn review(stars: u8) -> ReviewStatus {
    let description = match stars {
        4 => "practice guideline",
        3 => "reviewed by expert panel",
        2 => "criteria provided, multiple submitters, no conflicts",
        1 => "criteria provided, single submitter",
        _ => "no assertion criteria provided",
    };
    ReviewStatus::new(stars, description).unwrap()
}

/// The same 25 pinned variants the golden file was generated from. Kept
/// in sync with the core test fixture by the byte-for-byte golden
/// comparison itself.
pub fn golden_variants() -> Vec<JoinedVariant> {
    let categories = [
        GencodeCategory::Intergenic,
        GencodeCategory::Missense,
        GencodeCategory::Synonymous,
        GencodeCategory::StopGain,
        GencodeCategory::StopLoss,
        GencodeCategory::Frameshift,
        GencodeCategory::InframeIndel,
        GencodeCategory::Exonic,
        GencodeCategory::Splicing,
        GencodeCategory::Utr5,
        GencodeCategory::Utr3,
        GencodeCategory::Intronic,
        GencodeCategory::NcRnaExonic,
        GencodeCategory::NcRnaIntronic,
        GencodeCategory::Upstream,
        GencodeCategory::Downstream,
    ];
    let sig = [
        ClinicalSignificance::Pathogenic,
        ClinicalSignificance::LikelyPathogenic,
        ClinicalSignificance::UncertainSignificance,
        ClinicalSignificance::LikelyBenign,
        ClinicalSignificance::Benign,
        ClinicalSignificance::DrugResponse,
    ];

    let mut out = Vec::new();
    for i in 0..25usize {
        let chrom_label = CHROMOSOME_LABELS[i % 25];
        let position = 148992859u64 + (i as u64) * 7_919;
        let (ref_allele, alt_allele) = match i % 5 {
            0 => ("C", "A"),
            1 => ("G", "T"),
            2 => ("A", "G"),
            3 => ("T", "TAC"),
            _ => ("GAT", "G"),
        };
        let rsid = (i % 3 != 2).then(|| format!("rs{}", 100000 + i * 37));
        let key = VariantKey::from_parts(
            chrom_label,
            position,
            ref_allele,
            alt_allele,
            rsid.as_deref(),
        )
        .unwrap();

        let category = categories[i % categories.len()];
        let functional = FunctionalAnnotation {
            gencode_category: category,
            gencode_info: format!("GENE{}", i + 1),
            metasvm: match i % 4 {
                0 => Some(MetaSvmPrediction::Deleterious),
                1 => Some(MetaSvmPrediction::Tolerated),
                _ => None,
            },
            cadd_phred: (i % 3 != 1).then_some(0.75 * (i as f64 + 1.0)),
            cage: (i % 4 == 0).then(|| "promoter".to_string()),
            genehancer: (i % 5 == 0).then(|| format!("GH0{i}J00{i}")),
            rdhs: (i % 6 == 0).then(|| format!("EH38E{i:07}")),
        };

        let clinvar = match i % 4 {
            0 => vec![],
            1 => vec![ClinVarRecord {
                clinical_significance: sig[i % sig.len()],
                conditions: vec!["Familial disease Y".to_string()],
                review_status: review(2),
            }],
            2 => vec![
                ClinVarRecord {
                    clinical_significance: sig[i % sig.len()],
                    conditions: vec![
                        "Hereditary cancer-predisposing syndrome".to_string(),
                        "Breast-ovarian cancer, familial".to_string(),
                    ],
                    review_status: review(3),
                },
                ClinVarRecord {
                    clinical_significance: sig[(i + 1) % sig.len()],
                    conditions: vec![],
                    review_status: review(1),
                },
            ],
            _ => vec![ClinVarRecord {
                clinical_significance: sig[i % sig.len()],
                conditions: (1..=7).map(|c| format!("Condition {c}")).collect(),
                review_status: review(4),
            }],
        };

        let traits = [
            "Type 2 diabetes",
            "Height",
            "Coronary artery disease",
            "Body mass index",
            "Breast carcinoma",
            "LDL cholesterol levels",
            "Systolic blood pressure",
        ];
        let gwas = match i % 3 {
            0 => vec![],
            1 => vec![GwasAssociation {
                trait_name: traits[i % traits.len()].to_string(),
                p_value: Some(3e-12),
                study_ref: Some(format!("PMID:{}", 30000000 + i)),
            }],
            _ => (0..(if i % 2 == 0 { 3 } else { 7 }))
                .map(|t| GwasAssociation {
                    trait_name: traits[(i + t) % traits.len()].to_string(),
                    p_value: (t % 2 == 0).then(|| 5.0e-8 / (t + 1) as f64),
                    study_ref: (t % 3 != 1).then(|| format!("PMID:{}", 31000000 + t)),
                })
                .collect(),
        };

        out.push(JoinedVariant {
            key,
            functional,
            clinvar,
            gwas,
            flip_applied: i % 7 == 0,
        });
    }
    out
}

/// Random but valid joined variant (indels included) for property checks.
pub fn random_joined(rng: &mut ChaCha8Rng) -> JoinedVariant {
    fn allele(rng: &mut ChaCha8Rng, max_len: usize) -> String {
        let bases = *b"ACGT";
        let len = rng.gen_range(1..=max_len);
        (0..len)
            .map(|_| bases[rng.gen_range(0..4)] as char)
            .collect()
    }
    let chrom = Chromosome::from_rank(rng.gen_range(1..=25)).unwrap();
    let (ref_a, alt_a) = loop {
        let r = allele(rng, 3);
        let a = allele(rng, 3);
        if !(r.len() == 1 && a.len() == 1 && r == a) {
            break (r, a);
        }
    };
    let key = VariantKey::new(
        chrom,
        rng.gen_range(1..=249_000_000u64),
        Allele::parse(&ref_a).unwrap(),
        Allele::parse(&alt_a).unwrap(),
        (rng.gen_bool(0.5)).then(|| Rsid::parse(&format!("rs{}", rng.next_u32())).unwrap()),
    )
    .unwrap();

    let categories = [
        GencodeCategory::Intergenic,
        GencodeCategory::Missense,
        GencodeCategory::Intronic,
        GencodeCategory::Upstream,
        GencodeCategory::Utr3,
    ];
    let functional = FunctionalAnnotation {
        gencode_category: categories[rng.gen_range(0..categories.len())],
        gencode_info: format!("GENE{}", rng.gen_range(1..5000)),
        metasvm: match rng.gen_range(0..3) {
            0 => Some(MetaSvmPrediction::Deleterious),
            1 => Some(MetaSvmPrediction::Tolerated),
            _ => None,
        },
        cadd_phred: rng.gen_bool(0.7).then(|| rng.gen_range(0.0..60.0)),
        cage: rng.gen_bool(0.2).then(|| "enhancer".to_string()),
        genehancer: rng
            .gen_bool(0.2)
            .then(|| format!("GH{}", rng.gen_range(1..999))),
        rdhs: rng
            .gen_bool(0.2)
            .then(|| format!("EH38E{:07}", rng.gen_range(1..9_999_999))),
    };
    let clinvar = (0..rng.gen_range(0..3))
        .map(|_| ClinVarRecord {
            clinical_significance: ClinicalSignificance::parse("benign").unwrap(),
            conditions: (0..rng.gen_range(0..4))
                .map(|c| format!("Condition {c}"))
                .collect(),
            review_status: review(rng.gen_range(0..=4)),
        })
        .collect();
    let gwas = (0..rng.gen_range(0..4))
        .map(|t| GwasAssociation {
            trait_name: format!("Trait {t}"),
            p_value: rng
                .gen_bool(0.8)
                .then(|| 10f64.powf(-rng.gen_range(5.0..30.0))),
            study_ref: rng
                .gen_bool(0.5)
                .then(|| format!("PMID:{}", rng.next_u32())),
        })
        .collect();
    JoinedVariant {
        key,
        functional,
        clinvar,
        gwas,
        flip_applied: rng.gen_bool(0.1),
    }
}

/// Write a minimal pipeline TOML pointing at the shipped fixture trio.
pub fn fixture_pipeline_toml(
    dir: &std::path::Path,
    backend: &str,
    n_train: usize,
    include_timings: bool,
    journal: bool,
) -> PathBuf {
    let toml = format!(
        r#"seed = 42
strict = false

[sources.favor]
input = "{favor}"
schema = "{favor_schema}"

[sources.clinvar]
input = "{clinvar}"
schema = "{clinvar_schema}"

[sources.gwas]
input = "{gwas}"
schema = "{gwas_schema}"

[annotate]
tokenizer = "ws"

[embed]
backend = "{backend}"
{journal_line}
[eval]
tasks = ["chromosome", "ref-allele"]
n_train = {n_train}

[output]
dir = "{out}"
include_timings = {include_timings}
"#,
        favor = fixture("favor.tsv").display(),
        favor_schema = fixture("favor_schema.json").display(),
        clinvar = fixture("clinvar.tsv").display(),
        clinvar_schema = fixture("clinvar_schema.json").display(),
        gwas = fixture("gwas.tsv").display(),
        gwas_schema = fixture("gwas_schema.json").display(),
        journal_line = if journal {
            "journal = \"embed.journal\"\n".to_string()
        } else {
            String::new()
        },
        out = dir.join("work").display(),
    );
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, toml).unwrap();
    path
}
