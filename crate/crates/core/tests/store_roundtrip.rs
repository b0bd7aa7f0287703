//! Store integrity: bit-exact f32 round-trips at scale, invariance to
//! shard sizing, fault-injected corruption detection, a hash-map probe
//! oracle, and interchange round-trips.

mod common;

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varembed_core::model::{EmbeddingVector, VariantKey};
use varembed_core::store::{
    export_jsonl, export_tsv, import_jsonl, write_shards, Dtype, EmbeddingStore, KeyKind,
    StoreError,
};

fn random_records(n: usize, dim: usize, seed: u64) -> Vec<(String, EmbeddingVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = std::collections::BTreeSet::new();
    while keys.len() < n {
        let key = VariantKey::from_parts(
            varembed_core::model::CHROMOSOME_LABELS[rng.gen_range(0..25)],
            rng.gen_range(1..250_000_000u64),
            ["A", "C", "G", "T"][rng.gen_range(0..4)],
            ["A", "C", "G", "T"][rng.gen_range(0..4)],
            None,
        );
        if let Ok(key) = key {
            keys.insert(key);
        }
    }
    keys.into_iter()
        .map(|k| {
            let values: Vec<f32> = (0..dim)
                .map(|_| f32::from_bits(0x3000_0000 | (rng.next_u32() & 0x007F_FFFF)))
                .collect();
            (k.to_string(), EmbeddingVector::new(values, "rt").unwrap())
        })
        .collect()
}

#[test]
fn fifty_thousand_vectors_round_trip_bit_identically() {
    let started = std::time::Instant::now();
    let records = random_records(50_000, 16, 42);
    let dir = tempfile::tempdir().unwrap();
    write_shards(
        records.clone(),
        dir.path(),
        20_000,
        Dtype::F32,
        KeyKind::Variant,
    )
    .unwrap();
    let store = EmbeddingStore::open(dir.path()).unwrap();
    assert_eq!(store.len(), 50_000);

    // Full-scan comparison, bitwise.
    let mut scanned = 0usize;
    for (record, (key, vector)) in store.scan(None, None).unwrap().zip(&records) {
        let (got_key, got_vec) = record.unwrap();
        assert_eq!(&got_key, key);
        let got_bits: Vec<u32> = got_vec.values().iter().map(|v| v.to_bits()).collect();
        let want_bits: Vec<u32> = vector.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(got_bits, want_bits);
        scanned += 1;
    }
    assert_eq!(scanned, 50_000);
    assert!(
        started.elapsed() < std::time::Duration::from_secs(30),
        "round-trip exceeded its runtime budget: {:?}",
        started.elapsed()
    );
}

#[test]
fn lookups_and_scans_are_invariant_to_records_per_shard() {
    let records = random_records(3_000, 8, 7);
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, per_shard) in dirs.iter().zip([1u64, 7, 1000]) {
        write_shards(
            records.clone(),
            dir.path(),
            per_shard,
            Dtype::F32,
            KeyKind::Variant,
        )
        .unwrap();
    }
    let stores: Vec<EmbeddingStore> = dirs
        .iter()
        .map(|d| EmbeddingStore::open(d.path()).unwrap())
        .collect();
    assert_eq!(stores[0].manifest().shards.len(), 3_000);
    assert_eq!(stores[2].manifest().shards.len(), 3);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let probe = if rng.gen_bool(0.5) {
            records[rng.gen_range(0..records.len())].0.clone()
        } else {
            format!(
                "{}-{}-A-C",
                varembed_core::model::CHROMOSOME_LABELS[rng.gen_range(0..25)],
                rng.gen_range(1..250_000_000u64)
            )
        };
        let results: Vec<Option<Vec<u32>>> = stores
            .iter()
            .map(|s| {
                s.get(&probe)
                    .unwrap()
                    .map(|v| v.values().iter().map(|x| x.to_bits()).collect())
            })
            .collect();
        assert_eq!(results[0], results[1]);
        assert_eq!(results[1], results[2]);
    }

    let scans: Vec<Vec<String>> = stores
        .iter()
        .map(|s| s.scan(None, None).unwrap().map(|r| r.unwrap().0).collect())
        .collect();
    assert_eq!(scans[0], scans[1]);
    assert_eq!(scans[1], scans[2]);
}

#[test]
fn probe_outcomes_match_a_hash_map_oracle() {
    let records = random_records(5_000, 4, 99);
    let dir = tempfile::tempdir().unwrap();
    write_shards(
        records.clone(),
        dir.path(),
        512,
        Dtype::F32,
        KeyKind::Variant,
    )
    .unwrap();
    let store = EmbeddingStore::open(dir.path()).unwrap();

    let oracle: HashMap<&str, &EmbeddingVector> =
        records.iter().map(|(k, v)| (k.as_str(), v)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = 0;
    let mut misses = 0;
    for _ in 0..10_000 {
        let probe = if rng.gen_bool(0.5) {
            records[rng.gen_range(0..records.len())].0.clone()
        } else {
            format!(
                "{}-{}-G-T",
                varembed_core::model::CHROMOSOME_LABELS[rng.gen_range(0..25)],
                rng.gen_range(1..250_000_000u64)
            )
        };
        let got = store.get(&probe).unwrap();
        match oracle.get(probe.as_str()) {
            Some(expected) => {
                hits += 1;
                assert_eq!(got.as_ref().map(|v| v.values()), Some(expected.values()));
            }
            None => {
                misses += 1;
                assert!(got.is_none(), "phantom hit for {probe}");
            }
        }
    }
    assert!(hits > 3_000 && misses > 3_000, "probe mix degenerated");
}

#[test]
fn per_chromosome_scans_concatenate_to_the_full_scan() {
    let records = random_records(2_000, 4, 51);
    let dir = tempfile::tempdir().unwrap();
    write_shards(records, dir.path(), 300, Dtype::F32, KeyKind::Variant).unwrap();
    let store = EmbeddingStore::open(dir.path()).unwrap();

    let full: Vec<String> = store
        .scan(None, None)
        .unwrap()
        .map(|r| r.unwrap().0)
        .collect();
    let mut concatenated = Vec::new();
    for chrom in varembed_core::model::Chromosome::all() {
        // Records here are single-base SNVs, so A-C is the smallest key
        // that can occur at a position.
        let start = format!("{chrom}-1-A-C");
        // Positions are < 2^63; this end key sorts after every real key on
        // the chromosome (T is the greatest base).
        let end = format!("{chrom}-9999999999-TTTT-TTTT");
        for record in store.scan(Some(&start), Some(&end)).unwrap() {
            concatenated.push(record.unwrap().0);
        }
    }
    assert_eq!(concatenated, full);
}

#[test]
fn truncation_of_each_shard_yields_checksum_error_never_wrong_data() {
    let records = random_records(300, 8, 13);
    let dir = tempfile::tempdir().unwrap();
    write_shards(
        records.clone(),
        dir.path(),
        100,
        Dtype::F32,
        KeyKind::Variant,
    )
    .unwrap();

    for shard_idx in 0..3 {
        let victim = dir.path().join(format!("shard-{shard_idx:05}.bin"));
        let original = std::fs::read(&victim).unwrap();

        // Truncate mid-record.
        std::fs::write(&victim, &original[..original.len() - 17]).unwrap();
        let store = EmbeddingStore::open(dir.path()).unwrap();
        let err = store
            .scan(None, None)
            .unwrap()
            .collect::<Result<Vec<_>, _>>()
            .unwrap_err();
        assert!(matches!(err, StoreError::ChecksumError(_)), "{err}");

        // Flip one byte, keeping the length.
        let mut flipped = original.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0xFF;
        std::fs::write(&victim, &flipped).unwrap();
        let store = EmbeddingStore::open(dir.path()).unwrap();
        let err = store.verify().unwrap_err();
        assert!(matches!(err, StoreError::ChecksumError(_)));

        std::fs::write(&victim, &original).unwrap();
        EmbeddingStore::open(dir.path()).unwrap().verify().unwrap();
    }
}

#[test]
fn interrupted_write_leaves_no_manifest_behind() {
    // A writer that never finished: shard files exist, manifest does not.
    let dir = tempfile::tempdir().unwrap();
    let records = random_records(10, 4, 1);
    let mut writer =
        varembed_core::store::ShardWriter::create(dir.path(), 4, Dtype::F32, KeyKind::Variant)
            .unwrap();
    for (k, v) in &records {
        writer.push(k, v).unwrap();
    }
    drop(writer); // crash: finish() never runs
    assert!(std::fs::read_dir(dir.path()).unwrap().count() > 0);
    match EmbeddingStore::open(dir.path()) {
        Err(StoreError::Manifest(_)) => {}
        Err(other) => panic!("unexpected error: {other}"),
        Ok(_) => panic!("a store without a manifest must not open"),
    }
}

#[test]
fn concurrent_lookups_and_scans_agree_with_serial_access() {
    let records = random_records(2_000, 8, 23);
    let dir = tempfile::tempdir().unwrap();
    write_shards(
        records.clone(),
        dir.path(),
        256,
        Dtype::F32,
        KeyKind::Variant,
    )
    .unwrap();
    let store = EmbeddingStore::open(dir.path()).unwrap();

    std::thread::scope(|scope| {
        for t in 0..4 {
            let store = &store;
            let records = &records;
            scope.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
                for _ in 0..500 {
                    let (key, expected) = &records[rng.gen_range(0..records.len())];
                    let got = store.get(key).unwrap().unwrap();
                    assert_eq!(got.values(), expected.values());
                }
                let scanned = store.scan(None, None).unwrap().count();
                assert_eq!(scanned, records.len());
            });
        }
    });
}

#[test]
fn jsonl_export_import_round_trips() {
    let records = random_records(500, 6, 77);
    let dir = tempfile::tempdir().unwrap();
    write_shards(
        records.clone(),
        dir.path(),
        128,
        Dtype::F32,
        KeyKind::Variant,
    )
    .unwrap();
    let store = EmbeddingStore::open(dir.path()).unwrap();

    let mut jsonl = Vec::new();
    let exported = export_jsonl(&store, &mut jsonl).unwrap();
    assert_eq!(exported, 500);

    let dir2 = tempfile::tempdir().unwrap();
    import_jsonl(
        jsonl.as_slice(),
        dir2.path(),
        64,
        Dtype::F32,
        KeyKind::Variant,
        "rt",
    )
    .unwrap();
    let reimported = EmbeddingStore::open(dir2.path()).unwrap();
    assert_eq!(reimported.len(), 500);
    for (key, vector) in &records {
        let got = reimported.get(key).unwrap().unwrap();
        let got_bits: Vec<u32> = got.values().iter().map(|v| v.to_bits()).collect();
        let want_bits: Vec<u32> = vector.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(got_bits, want_bits, "{key}");
    }

    let mut tsv = Vec::new();
    export_tsv(&store, &mut tsv).unwrap();
    let text = String::from_utf8(tsv).unwrap();
    assert_eq!(text.lines().count(), 500);
    assert!(text.lines().all(|l| l.split('\t').count() == 7));
}
