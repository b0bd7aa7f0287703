//! Shared test support: fixture paths, the 25 golden-variant set, random
//! joined-variant generation, and a reference BPE implementation kept
//! independent of the production tokenizer.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use varembed_core::model::{
    Allele, Chromosome, ClinVarRecord, ClinicalSignificance, FunctionalAnnotation, GencodeCategory,
    GwasAssociation, JoinedVariant, MetaSvmPrediction, ReviewStatus, Rsid, VariantKey,
};

pub fn testdata(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("testdata")
        .join(rel)
}

pub fn key(s: &str, rsid: Option<&str>) -> VariantKey {
    let mut k: VariantKey = s.parse().unwrap();
    k.rsid = rsid.map(|r| Rsid::parse(r).unwrap());
    k
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

/// The 25 variants pinned by the annotation golden file: every GENCODE
/// category, SNVs and indels, rsIDs present and absent, all score and
/// regulatory combinations, stacked ClinVar records, capped condition and
/// trait lists.
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
        let chrom_label = varembed_core::model::CHROMOSOME_LABELS[i % 25];
        let position = 148992859u64 + (i as u64) * 7_919;
        let (ref_allele, alt_allele) = match i % 5 {
            0 => ("C", "A"),
            1 => ("G", "T"),
            2 => ("A", "G"),
            3 => ("T", "TAC"), // insertion
            _ => ("GAT", "G"), // deletion
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

/// Random but valid joined variant for property tests. Alleles may be
/// multi-base; payload lists vary in length.
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

// ---------------------------------------------------------------------------
// Reference BPE implementation (independent oracle)
// ---------------------------------------------------------------------------

/// Reference pre-tokenizer: a direct, index-based transcription of the
/// documented rules, written separately from the production iterator.
pub fn ref_pretokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let is_letter = |c: char| c.is_alphabetic();
    let is_digit = |c: char| c.is_numeric();
    let is_ws = |c: char| c.is_whitespace();
    let mut pieces: Vec<String> = Vec::new();
    let mut i = 0usize;
    while i < n {
        let c = chars[i];
        if c == ' ' && i + 1 < n && !is_ws(chars[i + 1]) {
            let start = i;
            i += 1;
            if is_letter(chars[i]) {
                while i < n && is_letter(chars[i]) {
                    i += 1;
                }
            } else if is_digit(chars[i]) {
                let mut taken = 0;
                while i < n && is_digit(chars[i]) && taken < 3 {
                    i += 1;
                    taken += 1;
                }
            } else {
                while i < n && !is_ws(chars[i]) && !is_letter(chars[i]) && !is_digit(chars[i]) {
                    i += 1;
                }
            }
            pieces.push(chars[start..i].iter().collect());
        } else if is_letter(c) {
            let start = i;
            while i < n && is_letter(chars[i]) {
                i += 1;
            }
            pieces.push(chars[start..i].iter().collect());
        } else if is_digit(c) {
            let start = i;
            let mut taken = 0;
            while i < n && is_digit(chars[i]) && taken < 3 {
                i += 1;
                taken += 1;
            }
            pieces.push(chars[start..i].iter().collect());
        } else if is_ws(c) {
            let start = i;
            while i < n && is_ws(chars[i]) {
                i += 1;
            }
            // Hand back one trailing plain space before non-whitespace.
            if i < n && chars[i - 1] == ' ' && i - start > 1 {
                i -= 1;
            }
            pieces.push(chars[start..i].iter().collect());
        } else {
            let start = i;
            while i < n && !is_ws(chars[i]) && !is_letter(chars[i]) && !is_digit(chars[i]) {
                i += 1;
            }
            pieces.push(chars[start..i].iter().collect());
        }
    }
    pieces
}

/// Reference BPE token count for one piece: naive repeated scan for the
/// lowest-rank adjacent merge, O(n^2) per piece.
pub fn ref_count_piece(vocab: &std::collections::HashMap<Vec<u8>, u32>, piece: &str) -> u32 {
    let bytes = piece.as_bytes();
    if bytes.is_empty() {
        return 0;
    }
    if vocab.contains_key(bytes) {
        return 1;
    }
    let mut parts: Vec<Vec<u8>> = bytes.iter().map(|b| vec![*b]).collect();
    loop {
        let mut best: Option<(u32, usize)> = None;
        for i in 0..parts.len().saturating_sub(1) {
            let mut merged = parts[i].clone();
            merged.extend_from_slice(&parts[i + 1]);
            if let Some(&rank) = vocab.get(&merged) {
                if best.is_none_or(|(r, _)| rank < r) {
                    best = Some((rank, i));
                }
            }
        }
        match best {
            Some((_, i)) => {
                let right = parts.remove(i + 1);
                parts[i].extend_from_slice(&right);
            }
            None => break,
        }
    }
    parts.len() as u32
}

/// Reference count for whole text.
pub fn ref_count_text(vocab: &std::collections::HashMap<Vec<u8>, u32>, text: &str) -> u32 {
    ref_pretokenize(text)
        .iter()
        .map(|p| ref_count_piece(vocab, p))
        .sum()
}

/// Load a tiktoken-format vocab into a plain map for the reference side.
pub fn ref_load_vocab(path: &std::path::Path) -> std::collections::HashMap<Vec<u8>, u32> {
    use base64::Engine;
    let mut map = std::collections::HashMap::new();
    for line in std::fs::read_to_string(path).unwrap().lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (b64, rank) = line.split_once(' ').unwrap();
        map.insert(
            base64::engine::general_purpose::STANDARD
                .decode(b64)
                .unwrap(),
            rank.parse().unwrap(),
        );
    }
    map
}
