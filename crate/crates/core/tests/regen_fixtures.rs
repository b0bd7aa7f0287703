//! Fixture regeneration. Run explicitly after a deliberate change to
//! fixture-producing code, then commit the outputs:
//!
//! ```text
//! cargo test -p varembed-core --test regen_fixtures -- --ignored
//! ```
//!
//! Golden texts change whenever the annotation wording changes; that
//! friction is intentional.

mod common;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varembed_core::annotate::{render_text, TemplateConfig};
use varembed_core::embed::mock::HashMock;
use varembed_core::embed::EmbedBackend;
use varembed_core::model::{VariantKey, CHROMOSOME_LABELS};

const FIXTURE_SEED: u64 = 0x2025_0808;

fn write(rel: &str, content: &str) {
    let path = common::testdata(rel);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(&path, content).unwrap();
    println!("wrote {}", path.display());
}

#[test]
#[ignore = "regenerates committed fixtures"]
fn regenerate_fixtures() {
    regen_source_trio();
    regen_annotation_goldens();
    regen_bpe_fixture();
    regen_mock_golden();
}

// ---------------------------------------------------------------------------
// Source fixture trio: 500 FAVOR / 80 ClinVar (12 flips) / 60 GWAS
// (9 rsID-only)
// ---------------------------------------------------------------------------

struct FixtureVariant {
    key: VariantKey,
    rsid: Option<String>,
    category: &'static str,
    gene: String,
    metasvm: Option<&'static str>,
    cadd: Option<f64>,
    cage: Option<&'static str>,
    genehancer: Option<String>,
    rdhs: Option<String>,
}

fn fixture_favor_rows(rng: &mut ChaCha8Rng) -> Vec<FixtureVariant> {
    let categories = [
        "intergenic",
        "intronic",
        "missense",
        "synonymous",
        "upstream",
        "downstream",
        "UTR5",
        "UTR3",
        "exonic",
        "splicing",
    ];
    let mut used = std::collections::HashSet::new();
    let mut rows = Vec::new();
    let mut rs_counter = 562_000u64;
    // Three rsIDs deliberately shared by two positions each.
    let shared_rsids: Vec<String> = (0..3).map(|i| format!("rs{}", 900_000 + i)).collect();
    let mut shared_remaining = [2u32; 3];

    while rows.len() < 500 {
        let chrom = CHROMOSOME_LABELS[rng.gen_range(0..25)];
        let position = rng.gen_range(10_000..249_000_000u64);
        if !used.insert((chrom, position)) {
            continue;
        }
        let bases = ["A", "C", "G", "T"];
        let ref_allele = bases[rng.gen_range(0..4)];
        let alt_allele = loop {
            let a = bases[rng.gen_range(0..4)];
            if a != ref_allele {
                break a;
            }
        };
        let rsid = if let Some(slot) = shared_remaining.iter_mut().position(|r| *r > 0) {
            if rng.gen_bool(0.05) {
                shared_remaining[slot] -= 1;
                Some(shared_rsids[slot].clone())
            } else if rng.gen_bool(0.45) {
                rs_counter += rng.gen_range(1..50);
                Some(format!("rs{rs_counter}"))
            } else {
                None
            }
        } else if rng.gen_bool(0.45) {
            rs_counter += rng.gen_range(1..50);
            Some(format!("rs{rs_counter}"))
        } else {
            None
        };
        let category = categories[rng.gen_range(0..categories.len())];
        let metasvm = if category == "missense" && rng.gen_bool(0.7) {
            Some(if rng.gen_bool(0.5) { "D" } else { "T" })
        } else {
            None
        };
        rows.push(FixtureVariant {
            key: VariantKey::from_parts(chrom, position, ref_allele, alt_allele, rsid.as_deref())
                .unwrap(),
            rsid,
            category,
            gene: format!("GENE{}", rng.gen_range(1..400)),
            metasvm,
            cadd: rng
                .gen_bool(0.72)
                .then(|| (rng.gen_range(0.0..55.0) * 1000.0f64).round() / 1000.0),
            cage: rng.gen_bool(0.12).then(|| {
                if rng.gen_bool(0.5) {
                    "promoter"
                } else {
                    "enhancer"
                }
            }),
            genehancer: rng.gen_bool(0.10).then(|| {
                format!(
                    "GH{:02}J{:06}",
                    rng.gen_range(1..23),
                    rng.gen_range(1..999_999)
                )
            }),
            rdhs: rng
                .gen_bool(0.15)
                .then(|| format!("EH38E{:07}", rng.gen_range(1..9_999_999))),
        });
    }
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    rows
}

fn opt(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| ".".to_string())
}

fn regen_source_trio() {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
    let favor = fixture_favor_rows(&mut rng);

    let mut favor_tsv = String::from(
        "chrom\tpos\trsid\tref\talt\tgencode_category\tgencode_info\tmetasvm\tcadd_phred\tcage\tgenehancer\trdhs\n",
    );
    for row in &favor {
        writeln!(
            favor_tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.key.chromosome,
            row.key.position,
            row.rsid.as_deref().unwrap_or("."),
            row.key.ref_allele,
            row.key.alt_allele,
            row.category,
            row.gene,
            row.metasvm.unwrap_or("."),
            row.cadd.map_or(".".to_string(), |c| format!("{c}")),
            row.cage.unwrap_or("."),
            opt(&row.genehancer),
            opt(&row.rdhs),
        )
        .unwrap();
    }
    write("fixtures/favor.tsv", &favor_tsv);

    // ClinVar: 63 direct, 12 flipped, 5 unmatched = 80 rows.
    let significances = [
        "Pathogenic",
        "Likely pathogenic",
        "Uncertain significance",
        "Likely benign",
        "Benign",
        "drug response",
    ];
    let reviews = [
        "practice guideline",
        "reviewed by expert panel",
        "criteria provided, multiple submitters, no conflicts",
        "criteria provided, single submitter",
        "no assertion criteria provided",
    ];
    let conditions_pool = [
        "Familial disease Y",
        "Hereditary cancer-predisposing syndrome",
        "Cardiomyopathy",
        "Inborn genetic diseases",
        "Lynch syndrome",
    ];
    let mut clinvar_rows: Vec<String> = Vec::new();
    let mut picked = std::collections::HashSet::new();
    let pick_favor = |rng: &mut ChaCha8Rng, picked: &mut std::collections::HashSet<usize>| loop {
        let i = rng.gen_range(0..favor.len());
        if picked.insert(i) {
            return i;
        }
    };
    for row_idx in 0..80 {
        let flipped = (0..12).contains(&row_idx);
        let unmatched = (75..80).contains(&row_idx);
        let (chrom, pos, r, a, rsid) = if unmatched {
            let chrom = CHROMOSOME_LABELS[rng.gen_range(0..25)].to_string();
            (
                chrom,
                rng.gen_range(1..9_999u64),
                "A".to_string(),
                "C".to_string(),
                ".".to_string(),
            )
        } else {
            let v = &favor[pick_favor(&mut rng, &mut picked)];
            let (r, a) = if flipped {
                (v.key.alt_allele.to_string(), v.key.ref_allele.to_string())
            } else {
                (v.key.ref_allele.to_string(), v.key.alt_allele.to_string())
            };
            (
                v.key.chromosome.to_string(),
                v.key.position,
                r,
                a,
                v.rsid.clone().unwrap_or_else(|| ".".to_string()),
            )
        };
        let n_conditions = rng.gen_range(0..3);
        let conditions = if n_conditions == 0 {
            ".".to_string()
        } else {
            (0..n_conditions)
                .map(|_| conditions_pool[rng.gen_range(0..conditions_pool.len())])
                .collect::<Vec<_>>()
                .join("|")
        };
        clinvar_rows.push(format!(
            "{chrom}\t{pos}\t{rsid}\t{r}\t{a}\t{}\t{conditions}\t{}",
            significances[rng.gen_range(0..significances.len())],
            reviews[rng.gen_range(0..reviews.len())],
        ));
    }
    let mut clinvar_tsv =
        String::from("chrom\tpos\trsid\tref\talt\tsignificance\tconditions\treview_status\n");
    for row in &clinvar_rows {
        clinvar_tsv.push_str(row);
        clinvar_tsv.push('\n');
    }
    write("fixtures/clinvar.tsv", &clinvar_tsv);

    // GWAS: 9 rsID-only (7 resolving incl. one shared rsID, 2 unknown),
    // 51 positional (44 direct, 4 flips, 3 unmatched).
    let traits = [
        "Type 2 diabetes",
        "Height",
        "Coronary artery disease",
        "Body mass index",
        "Breast carcinoma",
        "LDL cholesterol levels",
    ];
    let with_rsid: Vec<&FixtureVariant> = favor.iter().filter(|v| v.rsid.is_some()).collect();
    let mut gwas_rows: Vec<String> = Vec::new();
    for row_idx in 0..60 {
        let trait_name = traits[rng.gen_range(0..traits.len())];
        let p = if rng.gen_bool(0.9) {
            format!("{:e}", 10f64.powf(-rng.gen_range(5.0..30.0)))
        } else {
            ".".to_string()
        };
        let study = if rng.gen_bool(0.8) {
            format!("PMID:{}", rng.gen_range(20_000_000..39_999_999))
        } else {
            ".".to_string()
        };
        let row = if row_idx < 9 {
            // rsID-only rows.
            let rsid = if row_idx < 7 {
                if row_idx == 0 {
                    "rs900000".to_string() // shared by two positions
                } else {
                    with_rsid[rng.gen_range(0..with_rsid.len())]
                        .rsid
                        .clone()
                        .unwrap()
                }
            } else {
                format!("rs{}", 77_000_000 + row_idx) // not in FAVOR
            };
            format!("{rsid}\t{trait_name}\t{p}\t{study}\t.\t.\t.\t.")
        } else {
            let flipped = (9..13).contains(&row_idx);
            let unmatched = (57..60).contains(&row_idx);
            if unmatched {
                format!(
                    ".\t{trait_name}\t{p}\t{study}\t{}\t{}\tA\tG",
                    CHROMOSOME_LABELS[rng.gen_range(0..25)],
                    rng.gen_range(1..9_999u64),
                )
            } else {
                let v = &favor[rng.gen_range(0..favor.len())];
                let (r, a) = if flipped {
                    (v.key.alt_allele.to_string(), v.key.ref_allele.to_string())
                } else {
                    (v.key.ref_allele.to_string(), v.key.alt_allele.to_string())
                };
                format!(
                    "{}\t{trait_name}\t{p}\t{study}\t{}\t{}\t{}\t{}",
                    v.rsid.as_deref().unwrap_or("."),
                    v.key.chromosome,
                    v.key.position,
                    r,
                    a,
                )
            }
        };
        gwas_rows.push(row);
    }
    let mut gwas_tsv = String::from("rsid\ttrait\tp_value\tstudy_ref\tchrom\tpos\tref\talt\n");
    for row in &gwas_rows {
        gwas_tsv.push_str(row);
        gwas_tsv.push('\n');
    }
    write("fixtures/gwas.tsv", &gwas_tsv);

    write(
        "fixtures/favor_schema.json",
        &serde_json::to_string_pretty(&serde_json::json!({
            "source_kind": "favor",
            "delimiter": "\t",
            "has_header": true,
            "column_map": {
                "chromosome": "chrom", "position": "pos", "rsid": "rsid",
                "ref": "ref", "alt": "alt",
                "gencode_category": "gencode_category", "gencode_info": "gencode_info",
                "metasvm": "metasvm", "cadd_phred": "cadd_phred",
                "cage": "cage", "genehancer": "genehancer", "rdhs": "rdhs"
            }
        }))
        .unwrap(),
    );
    write(
        "fixtures/clinvar_schema.json",
        &serde_json::to_string_pretty(&serde_json::json!({
            "source_kind": "clinvar",
            "delimiter": "\t",
            "has_header": true,
            "column_map": {
                "chromosome": "chrom", "position": "pos", "rsid": "rsid",
                "ref": "ref", "alt": "alt",
                "significance": "significance", "conditions": "conditions",
                "review_status": "review_status"
            }
        }))
        .unwrap(),
    );
    write(
        "fixtures/gwas_schema.json",
        &serde_json::to_string_pretty(&serde_json::json!({
            "source_kind": "gwas_catalog",
            "delimiter": "\t",
            "has_header": true,
            "column_map": {
                "rsid": "rsid", "trait": "trait", "p_value": "p_value",
                "study_ref": "study_ref",
                "chromosome": "chrom", "position": "pos", "ref": "ref", "alt": "alt"
            }
        }))
        .unwrap(),
    );
}

// ---------------------------------------------------------------------------
// Annotation goldens
// ---------------------------------------------------------------------------

fn regen_annotation_goldens() {
    let variants = common::golden_variants();
    let default_cfg = TemplateConfig::default();
    let explicit_cfg = TemplateConfig {
        omit_missing: false,
        ..TemplateConfig::default()
    };
    let mut out = String::new();
    for v in &variants {
        writeln!(out, "### {} omit_missing=true", v.key).unwrap();
        writeln!(out, "{}", render_text(v, &default_cfg)).unwrap();
    }
    for v in variants.iter().take(5) {
        writeln!(out, "### {} omit_missing=false", v.key).unwrap();
        writeln!(out, "{}", render_text(v, &explicit_cfg)).unwrap();
    }
    write("annotation_goldens.txt", &out);
}

// ---------------------------------------------------------------------------
// BPE fixture: trained vocab + 50 sentences + reference counts
// ---------------------------------------------------------------------------

fn fixture_sentences() -> Vec<String> {
    let mut sentences: Vec<String> = common::golden_variants()
        .iter()
        .map(|v| render_text(v, &TemplateConfig::default()))
        .collect();
    let extras = [
        "The quick brown fox jumps over the lazy dog.",
        "Embedding pipelines compress annotations into numerical vectors.",
        "chromosome 5 position 148992859 reference C alternate A",
        "GWAS results identify statistical associations with complex traits.",
        "CADD scores are Phred-scaled measures of predicted deleteriousness.",
        "rs562556 is an rsID assigned by dbSNP.",
        "ClinVar review confidence ranges from zero to four stars.",
        "Intergenic variants report the nearest gene instead.",
        "A single-nucleotide variant replaces one base with another.",
        "Insertion-deletion variants shift or preserve the reading frame.",
        "Tokens: 64, 356, 89, 23.",
        "MetaSVM predicts deleterious or tolerated missense effects.",
        "Promoter and enhancer activity comes from CAGE experiments.",
        "The GRCh38 build anchors all coordinates in this corpus.",
        "Dosage 0, 1, or 2 counts alternate alleles per individual.",
        "  leading spaces and   runs of blanks are tokens too  ",
        "p = 3.0e-12; PMID:30367059",
        "Short.",
        "123456789012",
        "GENE1, GENE2, and GENE3 overlap a DNase hypersensitive site.",
        "Weighted averages aggregate variant embeddings per person.",
        "Random forests vote across depth-limited decision trees.",
        "Shards hold fixed-width records sorted by canonical key.",
        "Backoff doubles after each transient failure.",
        "The mitochondrial chromosome is labeled MT.",
    ];
    sentences.extend(extras.iter().map(|s| s.to_string()));
    assert_eq!(sentences.len(), 50);
    sentences
}

fn regen_bpe_fixture() {
    let sentences = fixture_sentences();

    // Train a small byte-level BPE on the fixture corpus: start from the
    // 256 byte tokens, repeatedly merge the most frequent adjacent pair.
    let corpus_pieces: Vec<Vec<u8>> = sentences
        .iter()
        .flat_map(|s| common::ref_pretokenize(s))
        .map(|p| p.into_bytes())
        .collect();
    let mut parts: Vec<Vec<Vec<u8>>> = corpus_pieces
        .iter()
        .map(|p| p.iter().map(|b| vec![*b]).collect())
        .collect();
    let mut vocab: Vec<Vec<u8>> = (0u16..=255).map(|b| vec![b as u8]).collect();

    while vocab.len() < 600 {
        let mut freq: HashMap<(Vec<u8>, Vec<u8>), u64> = HashMap::new();
        for piece in &parts {
            for w in piece.windows(2) {
                *freq.entry((w[0].clone(), w[1].clone())).or_insert(0) += 1;
            }
        }
        let Some(((left, right), count)) = freq
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        else {
            break;
        };
        if count < 2 {
            break;
        }
        let mut merged = left.clone();
        merged.extend_from_slice(&right);
        vocab.push(merged.clone());
        for piece in parts.iter_mut() {
            let mut i = 0;
            while i + 1 < piece.len() {
                if piece[i] == left && piece[i + 1] == right {
                    piece[i] = merged.clone();
                    piece.remove(i + 1);
                } else {
                    i += 1;
                }
            }
        }
    }

    let mut vocab_file = String::new();
    for (rank, token) in vocab.iter().enumerate() {
        writeln!(vocab_file, "{} {rank}", BASE64.encode(token)).unwrap();
    }
    write("bpe/fixture_vocab.tiktoken", &vocab_file);
    write("bpe/sentences.txt", &(sentences.join("\n") + "\n"));

    // Expected counts from the reference implementation.
    let vocab_map: HashMap<Vec<u8>, u32> = vocab
        .iter()
        .enumerate()
        .map(|(rank, tok)| (tok.clone(), rank as u32))
        .collect();
    let mut counts = String::new();
    for (i, s) in sentences.iter().enumerate() {
        writeln!(
            counts,
            "{}\t{}",
            i + 1,
            common::ref_count_text(&vocab_map, s)
        )
        .unwrap();
    }
    write("bpe/expected_counts.tsv", &counts);
}

// ---------------------------------------------------------------------------
// Mock determinism golden
// ---------------------------------------------------------------------------

fn regen_mock_golden() {
    let mock = HashMock::new(7, 16).unwrap();
    let out = mock
        .embed_batch(&[("probe".to_string(), "hello".to_string())])
        .unwrap();
    let golden = serde_json::json!({
        "seed": 7,
        "dim": 16,
        "text": "hello",
        "values": out[0].1.values(),
    });
    write(
        "mock_golden.json",
        &serde_json::to_string_pretty(&golden).unwrap(),
    );
}
