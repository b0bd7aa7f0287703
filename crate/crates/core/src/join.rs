//! Merges FAVOR, ClinVar, and GWAS record streams into joined variants.
//!
//! The join is left-anchored on FAVOR: every FAVOR key produces exactly
//! one output record, and augmenting sources never create or delete
//! variants. Augmenting records attach by exact positional identity
//! first, then by ref/alt exchange ("flip"); GWAS rows that carry only
//! an rsID resolve through the rsID index and attach to every positional
//! key sharing that rsID, counting once per input row.
//!
//! Two execution paths share the contract: an in-memory hash index for
//! desk-scale inputs, and a sort-merge walk over externally sorted
//! record files for inputs beyond memory. Both emit variants in
//! canonical key order with deterministic attachment ordering, so output
//! is byte-identical across runs and across augmenting-stream input
//! orderings.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ClinVarRecord, FunctionalAnnotation, GwasAssociation, JoinedVariant, VariantKey,
};
use crate::recfile::{ClinVarRow, FavorRow, GwasRow, RecfileError, RecfileReader, RecordKind};

#[derive(Debug, Error)]
pub enum JoinError {
    #[error("duplicate positional key {0} (strict mode)")]
    DuplicateKey(String),
    #[error("record file error: {0}")]
    Recfile(#[from] RecfileError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input not sorted: {0} follows {1}")]
    UnsortedInput(String, String),
}

/// Index over the FAVOR base table: positional identity to record, plus
/// an rsID multimap onto positional keys.
pub struct VariantIndex {
    records: Vec<(VariantKey, FunctionalAnnotation)>,
    positional: HashMap<VariantKey, usize>,
    by_rsid: HashMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IndexBuildStats {
    pub records_in: u64,
    /// Duplicate positional keys resolved last-writer-wins (lenient mode).
    pub duplicates: u64,
}

impl VariantIndex {
    pub fn len(&self) -> usize {
        self.positional.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positional.is_empty()
    }

    pub fn get(&self, key: &VariantKey) -> Option<&(VariantKey, FunctionalAnnotation)> {
        self.positional.get(key).map(|&i| &self.records[i])
    }

    pub fn contains(&self, key: &VariantKey) -> bool {
        self.positional.contains_key(key)
    }

    /// Positional keys registered under an rsID, in insertion order.
    pub fn keys_for_rsid(&self, rsid: &str) -> impl Iterator<Item = &VariantKey> {
        self.by_rsid
            .get(rsid)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i].0)
    }

    /// All distinct positional keys in canonical order.
    pub fn sorted_keys(&self) -> Vec<VariantKey> {
        let mut keys: Vec<VariantKey> = self.positional.keys().cloned().collect();
        keys.sort();
        keys
    }
}

/// Build the FAVOR index. `sorted` asserts that keys arrive in canonical
/// order (cheap validation for pre-sorted record files); duplicate keys
/// are an error under `strict`, otherwise last-writer-wins and counted.
pub fn build_variant_index(
    records: impl IntoIterator<Item = (VariantKey, FunctionalAnnotation)>,
    sorted: bool,
    strict: bool,
) -> Result<(VariantIndex, IndexBuildStats), JoinError> {
    let mut index = VariantIndex {
        records: Vec::new(),
        positional: HashMap::new(),
        by_rsid: HashMap::new(),
    };
    let mut stats = IndexBuildStats::default();
    let mut prev: Option<VariantKey> = None;
    for (key, ann) in records {
        stats.records_in += 1;
        if sorted {
            if let Some(p) = &prev {
                if *p > key {
                    return Err(JoinError::UnsortedInput(key.to_string(), p.to_string()));
                }
            }
            prev = Some(key.clone());
        }
        let offset = index.records.len();
        match index.positional.entry(key.clone()) {
            Entry::Occupied(mut e) => {
                if strict {
                    return Err(JoinError::DuplicateKey(key.to_string()));
                }
                stats.duplicates += 1;
                index.records.push((key, ann));
                e.insert(offset);
            }
            Entry::Vacant(e) => {
                e.insert(offset);
                if let Some(rsid) = &key.rsid {
                    index
                        .by_rsid
                        .entry(rsid.as_str().to_string())
                        .or_default()
                        .push(offset);
                }
                index.records.push((key, ann));
            }
        }
    }
    Ok((index, stats))
}

/// Outcome of resolving a query key against the index.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchResult {
    /// The exact positional key exists; holds the stored key.
    Direct(VariantKey),
    /// Only the ref/alt-exchanged key exists; holds the stored key.
    Flipped(VariantKey),
    None,
}

/// Resolve a query against the index, preferring an exact match over a
/// ref/alt-exchanged one. Total: never fails.
pub fn match_with_flip(query: &VariantKey, index: &VariantIndex) -> MatchResult {
    if let Some((stored, _)) = index.get(query) {
        return MatchResult::Direct(stored.clone());
    }
    if let Some((stored, _)) = index.get(&query.flipped()) {
        return MatchResult::Flipped(stored.clone());
    }
    MatchResult::None
}

/// Match accounting for one augmenting source, counted per input row.
/// An rsID-only row that attaches to several positional keys counts once
/// under `direct` (no allele exchange is involved in rsID resolution).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMatchCounts {
    pub direct: u64,
    pub flipped: u64,
    pub unmatched: u64,
}

impl SourceMatchCounts {
    pub fn total(&self) -> u64 {
        self.direct + self.flipped + self.unmatched
    }

    pub fn add(&mut self, other: &SourceMatchCounts) {
        self.direct += other.direct;
        self.flipped += other.flipped;
        self.unmatched += other.unmatched;
    }
}

/// Per-source match report emitted next to the joined output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub clinvar: SourceMatchCounts,
    pub gwas: SourceMatchCounts,
}

impl MatchReport {
    pub fn add(&mut self, other: &MatchReport) {
        self.clinvar.add(&other.clinvar);
        self.gwas.add(&other.gwas);
    }
}

/// Joined output plus its match report.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutput {
    pub variants: Vec<JoinedVariant>,
    pub report: MatchReport,
}

/// Attachment state for one set of FAVOR keys.
struct Accumulator<'a> {
    index: &'a VariantIndex,
    clinvar: HashMap<VariantKey, Vec<ClinVarRecord>>,
    gwas: HashMap<VariantKey, Vec<GwasAssociation>>,
    flipped: HashMap<VariantKey, bool>,
    report: MatchReport,
}

impl<'a> Accumulator<'a> {
    fn new(index: &'a VariantIndex) -> Self {
        Accumulator {
            index,
            clinvar: HashMap::new(),
            gwas: HashMap::new(),
            flipped: HashMap::new(),
            report: MatchReport::default(),
        }
    }

    fn attach_clinvar(&mut self, key: &VariantKey, record: ClinVarRecord) {
        match match_with_flip(key, self.index) {
            MatchResult::Direct(stored) => {
                self.report.clinvar.direct += 1;
                self.clinvar.entry(stored).or_default().push(record);
            }
            MatchResult::Flipped(stored) => {
                self.report.clinvar.flipped += 1;
                self.flipped.insert(stored.clone(), true);
                self.clinvar.entry(stored).or_default().push(record);
            }
            MatchResult::None => self.report.clinvar.unmatched += 1,
        }
    }

    fn attach_gwas_positional(&mut self, key: &VariantKey, association: GwasAssociation) {
        match match_with_flip(key, self.index) {
            MatchResult::Direct(stored) => {
                self.report.gwas.direct += 1;
                self.gwas.entry(stored).or_default().push(association);
            }
            MatchResult::Flipped(stored) => {
                self.report.gwas.flipped += 1;
                self.flipped.insert(stored.clone(), true);
                self.gwas.entry(stored).or_default().push(association);
            }
            MatchResult::None => self.report.gwas.unmatched += 1,
        }
    }

    /// Attach to a known stored key without counting (the row was already
    /// counted when its rsID was resolved).
    fn attach_gwas_resolved(&mut self, stored: VariantKey, association: GwasAssociation) {
        self.gwas.entry(stored).or_default().push(association);
    }

    fn attach_gwas_rsid(&mut self, rsid: &str, association: &GwasAssociation) {
        let targets: Vec<VariantKey> = self.index.keys_for_rsid(rsid).cloned().collect();
        if targets.is_empty() {
            self.report.gwas.unmatched += 1;
        } else {
            self.report.gwas.direct += 1;
            for t in targets {
                self.attach_gwas_resolved(t, association.clone());
            }
        }
    }

    /// Emit one joined variant per index key in canonical order.
    fn finish(mut self) -> JoinOutput {
        let mut variants = Vec::with_capacity(self.index.len());
        for key in self.index.sorted_keys() {
            let (stored, functional) = self.index.get(&key).expect("key from index");
            let mut clinvar = self.clinvar.remove(&key).unwrap_or_default();
            sort_clinvar_records(&mut clinvar);
            let mut gwas = self.gwas.remove(&key).unwrap_or_default();
            sort_gwas_records(&mut gwas);
            variants.push(JoinedVariant {
                key: stored.clone(),
                functional: functional.clone(),
                clinvar,
                gwas,
                flip_applied: self.flipped.remove(&key).unwrap_or(false),
            });
        }
        JoinOutput {
            variants,
            report: self.report,
        }
    }
}

/// Join augmenting streams onto the FAVOR index, emitting one
/// [`JoinedVariant`] per FAVOR key in canonical order.
pub fn join_sources(
    index: &VariantIndex,
    clinvar: impl IntoIterator<Item = (VariantKey, ClinVarRecord)>,
    gwas: impl IntoIterator<Item = GwasRow>,
) -> JoinOutput {
    let mut acc = Accumulator::new(index);
    for (key, record) in clinvar {
        acc.attach_clinvar(&key, record);
    }
    for row in gwas {
        match row.key {
            Some(key) => acc.attach_gwas_positional(&key, row.association),
            None => {
                let rsid = row.rsid.as_ref().map(|r| r.as_str()).unwrap_or_default();
                acc.attach_gwas_rsid(rsid, &row.association);
            }
        }
    }
    acc.finish()
}

/// Highest review tier first, then significance, then conditions; keeps
/// output byte-identical across augmenting-stream input orderings.
pub fn sort_clinvar_records(records: &mut [ClinVarRecord]) {
    records.sort_by(|a, b| {
        b.review_status
            .stars
            .cmp(&a.review_status.stars)
            .then_with(|| a.clinical_significance.cmp(&b.clinical_significance))
            .then_with(|| a.conditions.cmp(&b.conditions))
            .then_with(|| {
                a.review_status
                    .description
                    .cmp(&b.review_status.description)
            })
    });
}

pub fn sort_gwas_records(records: &mut [GwasAssociation]) {
    records.sort_by(|a, b| {
        a.trait_name
            .cmp(&b.trait_name)
            .then_with(|| match (a.p_value, b.p_value) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
            .then_with(|| a.study_ref.cmp(&b.study_ref))
    });
}

/// Join with disjoint chromosome partitions processed in parallel and
/// concatenated in chromosome rank order. Output and report are identical
/// to [`join_sources`].
pub fn join_sources_partitioned(
    index: &VariantIndex,
    clinvar: impl IntoIterator<Item = (VariantKey, ClinVarRecord)>,
    gwas: impl IntoIterator<Item = GwasRow>,
) -> JoinOutput {
    use rayon::prelude::*;

    // rsID-only rows are resolved (and counted) against the full index up
    // front so partitions only handle positional rows.
    let mut pre_report = MatchReport::default();
    let mut resolved_gwas: Vec<(VariantKey, GwasAssociation)> = Vec::new();
    let mut positional_gwas: Vec<(VariantKey, GwasAssociation)> = Vec::new();
    for row in gwas {
        match row.key {
            Some(key) => positional_gwas.push((key, row.association)),
            None => {
                let rsid = row.rsid.as_ref().map(|r| r.as_str()).unwrap_or_default();
                let targets: Vec<VariantKey> = index.keys_for_rsid(rsid).cloned().collect();
                if targets.is_empty() {
                    pre_report.gwas.unmatched += 1;
                } else {
                    pre_report.gwas.direct += 1;
                    for t in targets {
                        resolved_gwas.push((t, row.association.clone()));
                    }
                }
            }
        }
    }

    let mut clinvar_parts: HashMap<u8, Vec<(VariantKey, ClinVarRecord)>> = HashMap::new();
    for (key, rec) in clinvar {
        clinvar_parts
            .entry(key.chromosome.rank())
            .or_default()
            .push((key, rec));
    }
    let mut gwas_parts: HashMap<u8, Vec<(VariantKey, GwasAssociation)>> = HashMap::new();
    for (key, assoc) in positional_gwas {
        gwas_parts
            .entry(key.chromosome.rank())
            .or_default()
            .push((key, assoc));
    }
    let mut resolved_parts: HashMap<u8, Vec<(VariantKey, GwasAssociation)>> = HashMap::new();
    for (key, assoc) in resolved_gwas {
        resolved_parts
            .entry(key.chromosome.rank())
            .or_default()
            .push((key, assoc));
    }

    let mut favor_parts: HashMap<u8, Vec<(VariantKey, FunctionalAnnotation)>> = HashMap::new();
    for key in index.sorted_keys() {
        let (stored, ann) = index.get(&key).expect("key from index");
        favor_parts
            .entry(key.chromosome.rank())
            .or_default()
            .push((stored.clone(), ann.clone()));
    }

    let mut ranks: Vec<u8> = favor_parts.keys().copied().collect();
    // Augmenting rows on chromosomes with no FAVOR keys still need their
    // unmatched counts.
    for r in clinvar_parts.keys().chain(gwas_parts.keys()) {
        if !ranks.contains(r) {
            ranks.push(*r);
        }
    }
    ranks.sort_unstable();

    let results: Vec<JoinOutput> = ranks
        .par_iter()
        .map(|rank| {
            let favor = favor_parts.get(rank).cloned().unwrap_or_default();
            let (sub_index, _) =
                build_variant_index(favor, true, false).expect("sorted partition records");
            let mut acc = Accumulator::new(&sub_index);
            for (key, rec) in clinvar_parts.get(rank).into_iter().flatten() {
                acc.attach_clinvar(key, rec.clone());
            }
            for (key, assoc) in gwas_parts.get(rank).into_iter().flatten() {
                acc.attach_gwas_positional(key, assoc.clone());
            }
            for (key, assoc) in resolved_parts.get(rank).into_iter().flatten() {
                acc.attach_gwas_resolved(key.clone(), assoc.clone());
            }
            acc.finish()
        })
        .collect();

    let mut variants = Vec::with_capacity(index.len());
    let mut report = pre_report;
    for out in results {
        variants.extend(out.variants);
        report.add(&out.report);
    }
    JoinOutput { variants, report }
}

// ---------------------------------------------------------------------------
// Sort-merge path over externally sorted record files
// ---------------------------------------------------------------------------

/// Sort key used by the external sort and merge walk. GWAS rows without a
/// positional key sort first (they are resolved separately).
fn gwas_sort_key(row: &GwasRow) -> Option<VariantKey> {
    row.key.clone()
}

/// Externally sort a record file by canonical key order. Rows are sorted
/// in memory `chunk_rows` at a time, spilled to temporary chunk files,
/// and merged; memory stays bounded by the chunk size.
pub fn sort_recfile<T, K>(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    kind: RecordKind,
    chunk_rows: usize,
    key_of: impl Fn(&T) -> K,
) -> Result<u64, JoinError>
where
    T: Serialize + serde::de::DeserializeOwned,
    K: Ord,
{
    use crate::recfile::RecfileWriter;

    assert!(chunk_rows > 0, "chunk_rows must be positive");
    let tmp = tempfile::tempdir_in(
        output
            .as_ref()
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new(".")),
    )?;

    // Pass 1: sorted chunk files.
    let mut chunk_paths = Vec::new();
    {
        let reader = RecfileReader::open(&input, kind)?;
        let mut current: Vec<T> = Vec::new();
        let flush =
            |rows: &mut Vec<T>, paths: &mut Vec<std::path::PathBuf>| -> Result<(), JoinError> {
                rows.sort_by_key(|a| key_of(a));
                let path = tmp.path().join(format!("chunk-{:05}.rec", paths.len()));
                let mut w = RecfileWriter::create(&path, kind)?;
                for row in rows.drain(..) {
                    w.write_row(&row)?;
                }
                w.finish()?;
                paths.push(path);
                Ok(())
            };
        for row in reader.rows::<T>() {
            current.push(row?);
            if current.len() >= chunk_rows {
                flush(&mut current, &mut chunk_paths)?;
            }
        }
        if !current.is_empty() {
            flush(&mut current, &mut chunk_paths)?;
        }
    }

    // Pass 2: k-way merge. The chunk count is small; a linear min scan is
    // plenty.
    let mut cursors: Vec<std::iter::Peekable<_>> = chunk_paths
        .iter()
        .map(|p| -> Result<_, JoinError> {
            Ok(RecfileReader::open(p, kind)?.rows::<T>().peekable())
        })
        .collect::<Result<_, _>>()?;
    let mut writer = RecfileWriter::create(&output, kind)?;
    let mut written = 0u64;
    loop {
        for cur in cursors.iter_mut() {
            if matches!(cur.peek(), Some(Err(_))) {
                match cur.next().expect("peeked") {
                    Err(e) => return Err(e.into()),
                    Ok(_) => unreachable!("peeked an error"),
                }
            }
        }
        let mut best: Option<(usize, K)> = None;
        for (i, cur) in cursors.iter_mut().enumerate() {
            if let Some(Ok(row)) = cur.peek() {
                let k = key_of(row);
                if best.as_ref().is_none_or(|(_, bk)| k < *bk) {
                    best = Some((i, k));
                }
            }
        }
        match best {
            Some((i, _)) => {
                let row = cursors[i].next().expect("peeked")?;
                writer.write_row(&row)?;
                written += 1;
            }
            None => break,
        }
    }
    writer.finish()?;
    Ok(written)
}

/// Streaming sort-merge join over record files sorted in canonical key
/// order. Emits joined variants through `sink` and returns the match
/// report; output equals the in-memory [`join_sources`] path on the same
/// inputs.
///
/// Flipped keys share (chromosome, position) with their stored
/// orientation, so matching happens within one locus group at a time and
/// memory is bounded by the widest locus.
pub fn merge_join_sorted(
    favor_path: impl AsRef<Path>,
    clinvar_path: impl AsRef<Path>,
    gwas_path: impl AsRef<Path>,
    mut sink: impl FnMut(JoinedVariant) -> Result<(), JoinError>,
) -> Result<MatchReport, JoinError> {
    // Pre-pass: rsID -> positional keys, for rsID-only GWAS rows. This map
    // holds only keys that actually carry an rsID.
    let mut rsid_map: HashMap<String, Vec<VariantKey>> = HashMap::new();
    {
        let reader = RecfileReader::open(&favor_path, RecordKind::Favor)?;
        for row in reader.rows::<FavorRow>() {
            let (key, _) = row?.into_record();
            if let Some(rsid) = &key.rsid {
                let entry = rsid_map.entry(rsid.as_str().to_string()).or_default();
                if !entry.contains(&key) {
                    entry.push(key.clone());
                }
            }
        }
    }

    let mut report = MatchReport::default();

    // rsID-only rows sort before positional ones (no key), so the sorted
    // GWAS file starts with exactly the rows that need rsID resolution.
    // Resolve them into pre-counted positional attachments, then keep the
    // iterator as the streaming positional cursor.
    let gwas_reader = RecfileReader::open(&gwas_path, RecordKind::Gwas)?;
    let mut gwas = gwas_reader.rows::<GwasRow>().peekable();
    let mut resolved: Vec<(VariantKey, GwasAssociation)> = Vec::new();
    while matches!(gwas.peek(), Some(Ok(row)) if row.key.is_none()) {
        let row = gwas.next().expect("peeked")?;
        let rsid = row.rsid.as_ref().map(|r| r.as_str()).unwrap_or_default();
        match rsid_map.get(rsid) {
            Some(keys) => {
                report.gwas.direct += 1;
                for k in keys {
                    resolved.push((k.clone(), row.association.clone()));
                }
            }
            None => report.gwas.unmatched += 1,
        }
    }
    resolved.sort_by(|a, b| a.0.cmp(&b.0));
    drop(rsid_map);

    // Cursors over the sorted streams.
    let favor_reader = RecfileReader::open(&favor_path, RecordKind::Favor)?;
    let mut favor = favor_reader.rows::<FavorRow>().peekable();
    let clinvar_reader = RecfileReader::open(&clinvar_path, RecordKind::Clinvar)?;
    let mut clinvar = clinvar_reader.rows::<ClinVarRow>().peekable();
    let mut resolved_iter = resolved.into_iter().peekable();

    type Locus = (u8, u64);
    fn locus_of(k: &VariantKey) -> Locus {
        (k.chromosome.rank(), k.position)
    }

    let mut prev_favor: Option<VariantKey> = None;
    loop {
        // Find the smallest locus across all cursors.
        let mut next_locus: Option<Locus> = None;
        let consider = |l: Locus, next_locus: &mut Option<Locus>| {
            if next_locus.is_none_or(|n| l < n) {
                *next_locus = Some(l);
            }
        };
        // Surface pending read errors before inspecting keys.
        if matches!(favor.peek(), Some(Err(_))) {
            favor.next().expect("peeked")?;
        }
        if matches!(clinvar.peek(), Some(Err(_))) {
            clinvar.next().expect("peeked")?;
        }
        if matches!(gwas.peek(), Some(Err(_))) {
            gwas.next().expect("peeked")?;
        }
        if let Some(Ok(row)) = favor.peek() {
            consider(locus_of(&row.key), &mut next_locus);
        }
        if let Some(Ok(row)) = clinvar.peek() {
            consider(locus_of(&row.key), &mut next_locus);
        }
        if let Some(Ok(row)) = gwas.peek() {
            let key = row.key.as_ref().ok_or_else(|| {
                JoinError::UnsortedInput("rsID-only row".into(), "positional rows".into())
            })?;
            consider(locus_of(key), &mut next_locus);
        }
        if let Some((key, _)) = resolved_iter.peek() {
            consider(locus_of(key), &mut next_locus);
        }
        let locus = match next_locus {
            Some(l) => l,
            None => break,
        };

        // Gather rows at this locus. FAVOR duplicates resolve
        // last-writer-wins to mirror the lenient index build.
        let mut favor_here: Vec<(VariantKey, FunctionalAnnotation)> = Vec::new();
        while let Some(Ok(row)) = favor.peek() {
            if locus_of(&row.key) != locus {
                break;
            }
            let (key, ann) = favor.next().expect("peeked")?.into_record();
            if let Some(p) = &prev_favor {
                if *p > key {
                    return Err(JoinError::UnsortedInput(key.to_string(), p.to_string()));
                }
            }
            prev_favor = Some(key.clone());
            if let Some(existing) = favor_here.iter_mut().find(|(k, _)| *k == key) {
                existing.1 = ann;
            } else {
                favor_here.push((key, ann));
            }
        }

        let (locus_index, _) = build_variant_index(favor_here, true, false)?;
        let mut acc = Accumulator::new(&locus_index);

        while let Some(Ok(row)) = clinvar.peek() {
            if locus_of(&row.key) != locus {
                break;
            }
            let (key, record) = clinvar.next().expect("peeked")?.into_record();
            acc.attach_clinvar(&key, record);
        }
        while let Some(Ok(row)) = gwas.peek() {
            match &row.key {
                Some(key) if locus_of(key) == locus => {}
                _ => break,
            }
            let row = gwas.next().expect("peeked")?;
            let key = row.key.expect("checked above");
            acc.attach_gwas_positional(&key, row.association);
        }
        while let Some((key, _)) = resolved_iter.peek() {
            if locus_of(key) != locus {
                break;
            }
            let (key, assoc) = resolved_iter.next().expect("peeked");
            acc.attach_gwas_resolved(key, assoc);
        }

        let out = acc.finish();
        report.clinvar.add(&out.report.clinvar);
        report.gwas.add(&out.report.gwas);
        for v in out.variants {
            sink(v)?;
        }
    }

    Ok(report)
}

/// Convenience: sort-merge join collected into memory (used by tests and
/// the CLI on desk-scale inputs).
pub fn merge_join_sorted_collect(
    favor_path: impl AsRef<Path>,
    clinvar_path: impl AsRef<Path>,
    gwas_path: impl AsRef<Path>,
) -> Result<JoinOutput, JoinError> {
    let mut variants = Vec::new();
    let report = merge_join_sorted(favor_path, clinvar_path, gwas_path, |v| {
        variants.push(v);
        Ok(())
    })?;
    Ok(JoinOutput { variants, report })
}

/// Sort the three source record files by canonical key order, writing
/// `<name>.sorted` siblings; helper for the sort-merge path.
pub fn sort_source_recfiles(
    favor: impl AsRef<Path>,
    clinvar: impl AsRef<Path>,
    gwas: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    chunk_rows: usize,
) -> Result<(std::path::PathBuf, std::path::PathBuf, std::path::PathBuf), JoinError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let favor_out = out_dir.join("favor.sorted.rec");
    let clinvar_out = out_dir.join("clinvar.sorted.rec");
    let gwas_out = out_dir.join("gwas.sorted.rec");
    sort_recfile::<FavorRow, _>(&favor, &favor_out, RecordKind::Favor, chunk_rows, |r| {
        r.key.clone()
    })?;
    sort_recfile::<ClinVarRow, _>(
        &clinvar,
        &clinvar_out,
        RecordKind::Clinvar,
        chunk_rows,
        |r| r.key.clone(),
    )?;
    sort_recfile::<GwasRow, _>(
        &gwas,
        &gwas_out,
        RecordKind::Gwas,
        chunk_rows,
        gwas_sort_key,
    )?;
    Ok((favor_out, clinvar_out, gwas_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClinicalSignificance, GencodeCategory, ReviewStatus, Rsid};

    fn ann(gene: &str) -> FunctionalAnnotation {
        FunctionalAnnotation {
            gencode_category: GencodeCategory::Intergenic,
            gencode_info: gene.to_string(),
            metasvm: None,
            cadd_phred: None,
            cage: None,
            genehancer: None,
            rdhs: None,
        }
    }

    fn key(s: &str, rsid: Option<&str>) -> VariantKey {
        let mut k: VariantKey = s.parse().unwrap();
        k.rsid = rsid.map(|r| Rsid::parse(r).unwrap());
        k
    }

    #[test]
    fn index_lookup_returns_each_record() {
        let records = vec![
            (key("5-148992859-C-A", Some("rs1")), ann("G1")),
            (key("2-50-T-G", None), ann("G2")),
            (key("X-7-G-C", Some("rs3")), ann("G3")),
        ];
        let (index, stats) = build_variant_index(records.clone(), false, true).unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(stats.records_in, 3);
        for (k, a) in &records {
            let (sk, sa) = index.get(k).unwrap();
            assert_eq!(sk, k);
            assert_eq!(sa, a);
        }
    }

    #[test]
    fn shared_rsid_lists_both_positional_keys() {
        let records = vec![
            (key("1-100-A-C", Some("rs7")), ann("G1")),
            (key("1-100-A-G", Some("rs7")), ann("G1")),
        ];
        let (index, _) = build_variant_index(records, false, true).unwrap();
        let keys: Vec<String> = index.keys_for_rsid("rs7").map(|k| k.to_string()).collect();
        assert_eq!(keys, vec!["1-100-A-C", "1-100-A-G"]);
    }

    #[test]
    fn duplicate_keys_error_in_strict_mode_and_count_otherwise() {
        let records = vec![
            (key("1-100-A-C", None), ann("G1")),
            (key("1-100-A-C", None), ann("G2")),
        ];
        assert!(matches!(
            build_variant_index(records.clone(), false, true),
            Err(JoinError::DuplicateKey(_))
        ));
        let (index, stats) = build_variant_index(records, false, false).unwrap();
        assert_eq!(stats.duplicates, 1);
        // last writer wins
        assert_eq!(index.get(&key("1-100-A-C", None)).unwrap().1, ann("G2"));
    }

    #[test]
    fn match_prefers_direct_over_flip() {
        let (index, _) = build_variant_index(
            vec![
                (key("5-148992859-C-A", None), ann("G1")),
                (key("9-10-T-G", None), ann("G2")),
                (key("9-10-G-T", None), ann("G3")),
            ],
            false,
            false,
        )
        .unwrap();

        match match_with_flip(&key("5-148992859-C-A", None), &index) {
            MatchResult::Direct(k) => assert_eq!(k.to_string(), "5-148992859-C-A"),
            other => panic!("expected direct, got {other:?}"),
        }
        match match_with_flip(&key("5-148992859-A-C", None), &index) {
            MatchResult::Flipped(k) => assert_eq!(k.to_string(), "5-148992859-C-A"),
            other => panic!("expected flipped, got {other:?}"),
        }
        assert_eq!(
            match_with_flip(&key("5-1-A-C", None), &index),
            MatchResult::None
        );
        // Both orientations stored: direct wins for both queries.
        match match_with_flip(&key("9-10-T-G", None), &index) {
            MatchResult::Direct(k) => assert_eq!(k.to_string(), "9-10-T-G"),
            other => panic!("expected direct, got {other:?}"),
        }
    }

    #[test]
    fn singleton_join_attaches_one_record_per_source() {
        let (index, _) = build_variant_index(
            vec![(key("5-148992859-C-A", Some("rs1")), ann("G1"))],
            false,
            true,
        )
        .unwrap();
        let clinvar = vec![(
            key("5-148992859-C-A", None),
            ClinVarRecord {
                clinical_significance: ClinicalSignificance::Pathogenic,
                conditions: vec!["Familial disease Y".into()],
                review_status: ReviewStatus::new(2, "x").unwrap(),
            },
        )];
        let gwas = vec![GwasRow {
            key: Some(key("5-148992859-C-A", None)),
            rsid: None,
            association: GwasAssociation {
                trait_name: "T2D".into(),
                p_value: Some(3e-12),
                study_ref: None,
            },
        }];
        let out = join_sources(&index, clinvar, gwas);
        assert_eq!(out.variants.len(), 1);
        let v = &out.variants[0];
        assert_eq!(v.clinvar.len(), 1);
        assert_eq!(v.gwas.len(), 1);
        assert!(!v.flip_applied);
        assert_eq!(out.report.clinvar.direct, 1);
        assert_eq!(out.report.gwas.direct, 1);
    }

    #[test]
    fn rsid_only_row_attaches_to_every_key_under_that_rsid() {
        let (index, _) = build_variant_index(
            vec![
                (key("1-100-A-C", Some("rs7")), ann("G1")),
                (key("1-100-A-G", Some("rs7")), ann("G1")),
            ],
            false,
            true,
        )
        .unwrap();
        let gwas = vec![GwasRow {
            key: None,
            rsid: Some(Rsid::parse("rs7").unwrap()),
            association: GwasAssociation {
                trait_name: "Height".into(),
                p_value: None,
                study_ref: None,
            },
        }];
        let out = join_sources(&index, vec![], gwas);
        assert_eq!(out.variants.len(), 2);
        assert!(out.variants.iter().all(|v| v.gwas.len() == 1));
        assert_eq!(out.report.gwas.direct, 1); // one row, counted once
    }

    #[test]
    fn flip_attachment_marks_the_variant_and_counts() {
        let (index, _) =
            build_variant_index(vec![(key("5-148992859-C-A", None), ann("G1"))], false, true)
                .unwrap();
        let clinvar = vec![(
            key("5-148992859-A-C", None),
            ClinVarRecord {
                clinical_significance: ClinicalSignificance::Benign,
                conditions: vec![],
                review_status: ReviewStatus::new(0, "none").unwrap(),
            },
        )];
        let out = join_sources(&index, clinvar, vec![]);
        assert!(out.variants[0].flip_applied);
        assert_eq!(out.report.clinvar.flipped, 1);
        assert_eq!(out.variants[0].clinvar.len(), 1);
    }

    #[test]
    fn clinvar_records_order_by_tier_descending() {
        let (index, _) =
            build_variant_index(vec![(key("1-5-A-G", None), ann("G"))], false, true).unwrap();
        let mk = |stars: u8| ClinVarRecord {
            clinical_significance: ClinicalSignificance::Pathogenic,
            conditions: vec![],
            review_status: ReviewStatus::new(stars, format!("tier{stars}")).unwrap(),
        };
        let clinvar = vec![
            (key("1-5-A-G", None), mk(1)),
            (key("1-5-A-G", None), mk(3)),
            (key("1-5-A-G", None), mk(2)),
        ];
        let out = join_sources(&index, clinvar, vec![]);
        let tiers: Vec<u8> = out.variants[0]
            .clinvar
            .iter()
            .map(|r| r.review_status.stars)
            .collect();
        assert_eq!(tiers, vec![3, 2, 1]);
    }

    #[test]
    fn join_output_cardinality_equals_favor_cardinality() {
        let records: Vec<_> = (1..=50)
            .map(|i| (key(&format!("3-{}-A-G", i * 10), None), ann("G")))
            .collect();
        let (index, _) = build_variant_index(records, false, true).unwrap();
        let out = join_sources(&index, vec![], vec![]);
        assert_eq!(out.variants.len(), 50);
        assert!(out
            .variants
            .iter()
            .all(|v| v.clinvar.is_empty() && v.gwas.is_empty()));
    }
}
