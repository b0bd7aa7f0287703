//! Ingest integration tests: the shipped fixture trio, generated
//! corruption sweeps with an independent re-scan oracle, gzip
//! transparency, and the bounded-memory check.

mod common;

use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varembed_core::ingest::{
    open_input, ClinVarParser, FavorParser, GwasParser, ParseOptions, SourceSchema, StarMap,
};

fn favor_schema() -> SourceSchema {
    SourceSchema::from_json_file(common::testdata("fixtures/favor_schema.json")).unwrap()
}

#[test]
fn fixture_trio_parses_with_expected_counts() {
    let schema = favor_schema();
    let reader = open_input(common::testdata("fixtures/favor.tsv")).unwrap();
    let mut parser = FavorParser::new(reader, &schema, ParseOptions::default()).unwrap();
    let records: Vec<_> = (&mut parser).collect::<Result<_, _>>().unwrap();
    let report = parser.into_report();
    assert_eq!(records.len(), 500);
    assert_eq!((report.total, report.valid, report.skipped), (500, 500, 0));

    let schema =
        SourceSchema::from_json_file(common::testdata("fixtures/clinvar_schema.json")).unwrap();
    let reader = open_input(common::testdata("fixtures/clinvar.tsv")).unwrap();
    let mut parser = ClinVarParser::new(
        reader,
        &schema,
        StarMap::built_in(),
        ParseOptions::default(),
    )
    .unwrap();
    let records: Vec<_> = (&mut parser).collect::<Result<_, _>>().unwrap();
    assert_eq!(records.len(), 80);
    assert_eq!(parser.report().skipped, 0);

    let schema =
        SourceSchema::from_json_file(common::testdata("fixtures/gwas_schema.json")).unwrap();
    let reader = open_input(common::testdata("fixtures/gwas.tsv")).unwrap();
    let mut parser = GwasParser::new(reader, &schema, ParseOptions::default()).unwrap();
    let records: Vec<_> = (&mut parser).collect::<Result<_, _>>().unwrap();
    assert_eq!(records.len(), 60);
    assert_eq!(records.iter().filter(|r| r.key.is_none()).count(), 9);
    assert_eq!(parser.report().skipped, 0);
}

/// Build a clean 1,000-row FAVOR file, then corrupt exactly 7 chosen rows
/// in distinct ways. The oracle is an independent line-by-line re-scan
/// counting rows that violate the format.
#[test]
fn corruption_sweep_matches_line_rescan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut rows: Vec<String> = (0..1000)
        .map(|i| {
            format!(
                "{}\t{}\t.\tA\tC\tintergenic\tGENE{}\t.\t{}\t.\t.\t.",
                varembed_core::model::CHROMOSOME_LABELS[rng.gen_range(0..25)],
                10_000 + i * 13,
                i % 97,
                rng.gen_range(0.0..50.0),
            )
        })
        .collect();

    // Seven corruptions with known reasons, each rewriting one field.
    fn set_field(row: &str, idx: usize, value: &str) -> String {
        let mut parts: Vec<&str> = row.split('\t').collect();
        parts[idx] = value;
        parts.join("\t")
    }
    #[allow(clippy::type_complexity)]
    let corruptions: [(usize, &str, Box<dyn Fn(&str) -> String>); 7] = [
        (13, "column_count", Box::new(|_| "too\tfew".to_string())),
        (
            120,
            "position",
            Box::new(|r| set_field(r, 1, "not_a_number")),
        ),
        (
            333,
            "chromosome",
            Box::new(|r| set_field(r, 0, "chrUn_KI270752v1")),
        ),
        (404, "ref_allele", Box::new(|r| set_field(r, 3, "N"))),
        (555, "alt_allele", Box::new(|r| set_field(r, 4, "ZZ"))),
        (
            717,
            "gencode_category",
            Box::new(|r| set_field(r, 5, "mystery_class")),
        ),
        (888, "cadd_phred", Box::new(|r| set_field(r, 8, "-5.0"))),
    ];
    for (line, _, f) in &corruptions {
        rows[*line] = f(&rows[*line]);
    }

    let mut input = String::from(
        "chrom\tpos\trsid\tref\talt\tgencode_category\tgencode_info\tmetasvm\tcadd_phred\tcage\tgenehancer\trdhs\n",
    );
    input.push_str(&rows.join("\n"));
    input.push('\n');

    let mut parser =
        FavorParser::new(input.as_bytes(), &favor_schema(), ParseOptions::default()).unwrap();
    let parsed: Vec<_> = (&mut parser).collect::<Result<_, _>>().unwrap();
    let report = parser.into_report();

    assert_eq!(parsed.len(), 993);
    assert_eq!(report.total, 1000);
    assert_eq!(report.valid, 993);
    assert_eq!(report.skipped, 7);
    for (_, reason, _) in &corruptions {
        assert!(
            report.reasons.get(*reason).copied().unwrap_or(0) >= 1,
            "missing skip reason {reason}: {:?}",
            report.reasons
        );
    }
    assert_eq!(report.reasons.values().sum::<u64>(), 7);

    // Independent oracle: re-scan the raw lines.
    let oracle_bad = rows
        .iter()
        .filter(|r| {
            let parts: Vec<&str> = r.split('\t').collect();
            parts.len() < 12
                || parts[1].parse::<u64>().is_err()
                || varembed_core::model::normalize_chromosome(parts[0]).is_err()
                || !parts[3]
                    .bytes()
                    .all(|b| matches!(b, b'A' | b'C' | b'G' | b'T'))
                || !parts[4]
                    .bytes()
                    .all(|b| matches!(b, b'A' | b'C' | b'G' | b'T'))
                || parts[5] == "mystery_class"
                || (parts[8] != "." && parts[8].parse::<f64>().map_or(true, |c| c < 0.0))
        })
        .count();
    assert_eq!(oracle_bad, 7);
    assert_eq!(report.skipped as usize, oracle_bad);
}

#[test]
fn gzip_input_is_transparent() {
    let plain = std::fs::read(common::testdata("fixtures/favor.tsv")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let gz_path = dir.path().join("favor.tsv.gz");
    let mut encoder = GzEncoder::new(
        std::fs::File::create(&gz_path).unwrap(),
        Compression::fast(),
    );
    encoder.write_all(&plain).unwrap();
    encoder.finish().unwrap();

    let schema = favor_schema();
    let from_plain: Vec<_> = FavorParser::new(
        open_input(common::testdata("fixtures/favor.tsv")).unwrap(),
        &schema,
        ParseOptions::default(),
    )
    .unwrap()
    .collect::<Result<_, _>>()
    .unwrap();
    let from_gz: Vec<_> = FavorParser::new(
        open_input(&gz_path).unwrap(),
        &schema,
        ParseOptions::default(),
    )
    .unwrap()
    .collect::<Result<_, _>>()
    .unwrap();
    assert_eq!(from_plain, from_gz);
}

#[test]
fn parsing_is_deterministic() {
    let schema = favor_schema();
    let run = || -> Vec<String> {
        FavorParser::new(
            open_input(common::testdata("fixtures/favor.tsv")).unwrap(),
            &schema,
            ParseOptions::default(),
        )
        .unwrap()
        .map(|r| {
            let (k, a) = r.unwrap();
            format!("{k}:{}", a.gencode_info)
        })
        .collect()
    };
    assert_eq!(run(), run());
}
