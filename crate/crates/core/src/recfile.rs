//! Typed intermediate record files.
//!
//! Stages hand records to each other through JSON-lines files with a
//! one-line header declaring the record kind, so a file produced by
//! `ingest --source favor` cannot be silently fed to a consumer that
//! expects ClinVar rows. Rows are serialized with a stable field order,
//! which keeps byte-identical output achievable for deterministic runs.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ClinVarRecord, FunctionalAnnotation, GwasAssociation, JoinedVariant, Rsid, VariantKey,
};

pub const RECFILE_FORMAT: &str = "varembed-records";
pub const RECFILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecfileError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: u64,
        source: serde_json::Error,
    },
    #[error("missing recfile header")]
    MissingHeader,
    #[error("record kind mismatch: expected {expected:?}, file holds {found:?}")]
    KindMismatch {
        expected: RecordKind,
        found: RecordKind,
    },
    #[error("unsupported recfile format or version")]
    UnsupportedFormat,
}

/// What a record file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Favor,
    Clinvar,
    Gwas,
    Joined,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    kind: RecordKind,
    version: u32,
}

/// FAVOR row: positional key plus functional annotation payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FavorRow {
    pub key: VariantKey,
    pub rsid: Option<Rsid>,
    pub annotation: FunctionalAnnotation,
}

impl FavorRow {
    pub fn from_record(key: VariantKey, annotation: FunctionalAnnotation) -> Self {
        let rsid = key.rsid.clone();
        FavorRow {
            key,
            rsid,
            annotation,
        }
    }

    /// Reattach the sibling rsid field onto the key.
    pub fn into_record(self) -> (VariantKey, FunctionalAnnotation) {
        let mut key = self.key;
        key.rsid = self.rsid;
        (key, self.annotation)
    }
}

/// ClinVar row: positional key plus one clinical assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinVarRow {
    pub key: VariantKey,
    pub rsid: Option<Rsid>,
    pub record: ClinVarRecord,
}

impl ClinVarRow {
    pub fn from_record(key: VariantKey, record: ClinVarRecord) -> Self {
        let rsid = key.rsid.clone();
        ClinVarRow { key, rsid, record }
    }

    pub fn into_record(self) -> (VariantKey, ClinVarRecord) {
        let mut key = self.key;
        key.rsid = self.rsid;
        (key, self.record)
    }
}

/// GWAS row. Rows that identify a variant by rsID only carry no
/// positional key; the join resolves them through its rsID index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwasRow {
    pub key: Option<VariantKey>,
    pub rsid: Option<Rsid>,
    pub association: GwasAssociation,
}

/// Joined row: the full merged payload for one FAVOR variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedRow {
    pub key: VariantKey,
    pub rsid: Option<Rsid>,
    pub flip_applied: bool,
    pub functional: FunctionalAnnotation,
    pub clinvar: Vec<ClinVarRecord>,
    pub gwas: Vec<GwasAssociation>,
}

impl From<JoinedVariant> for JoinedRow {
    fn from(v: JoinedVariant) -> Self {
        let rsid = v.key.rsid.clone();
        JoinedRow {
            key: v.key,
            rsid,
            flip_applied: v.flip_applied,
            functional: v.functional,
            clinvar: v.clinvar,
            gwas: v.gwas,
        }
    }
}

impl From<JoinedRow> for JoinedVariant {
    fn from(row: JoinedRow) -> Self {
        let mut key = row.key;
        key.rsid = row.rsid;
        JoinedVariant {
            key,
            functional: row.functional,
            clinvar: row.clinvar,
            gwas: row.gwas,
            flip_applied: row.flip_applied,
        }
    }
}

/// Writes one record file: header line, then one JSON object per row.
pub struct RecfileWriter<W: Write> {
    out: BufWriter<W>,
    rows: u64,
}

impl RecfileWriter<File> {
    pub fn create(path: impl AsRef<Path>, kind: RecordKind) -> Result<Self, RecfileError> {
        RecfileWriter::new(File::create(path)?, kind)
    }
}

impl<W: Write> RecfileWriter<W> {
    pub fn new(writer: W, kind: RecordKind) -> Result<Self, RecfileError> {
        let mut out = BufWriter::new(writer);
        let header = Header {
            format: RECFILE_FORMAT.to_string(),
            kind,
            version: RECFILE_VERSION,
        };
        serde_json::to_writer(&mut out, &header)
            .map_err(|source| RecfileError::Json { line: 1, source })?;
        out.write_all(b"\n")?;
        Ok(RecfileWriter { out, rows: 0 })
    }

    pub fn write_row<T: Serialize>(&mut self, row: &T) -> Result<(), RecfileError> {
        serde_json::to_writer(&mut self.out, row).map_err(|source| RecfileError::Json {
            line: self.rows + 2,
            source,
        })?;
        self.out.write_all(b"\n")?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows_written(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<(), RecfileError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads one record file, validating the header kind before yielding rows.
pub struct RecfileReader<R: BufRead> {
    lines: io::Lines<R>,
    line_no: u64,
}

impl RecfileReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, expected: RecordKind) -> Result<Self, RecfileError> {
        RecfileReader::new(BufReader::new(File::open(path)?), expected)
    }
}

impl<R: BufRead> RecfileReader<R> {
    pub fn new(reader: R, expected: RecordKind) -> Result<Self, RecfileError> {
        let mut lines = reader.lines();
        let header_line = lines.next().ok_or(RecfileError::MissingHeader)??;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|source| RecfileError::Json { line: 1, source })?;
        if header.format != RECFILE_FORMAT || header.version != RECFILE_VERSION {
            return Err(RecfileError::UnsupportedFormat);
        }
        if header.kind != expected {
            return Err(RecfileError::KindMismatch {
                expected,
                found: header.kind,
            });
        }
        Ok(RecfileReader { lines, line_no: 1 })
    }

    /// Iterate rows of type `T`, stopping at end of file.
    pub fn rows<T: DeserializeOwned>(self) -> impl Iterator<Item = Result<T, RecfileError>> {
        let mut line_no = self.line_no;
        self.lines.map(move |line| {
            line_no += 1;
            let line = line?;
            serde_json::from_str(&line).map_err(|source| RecfileError::Json {
                line: line_no,
                source,
            })
        })
    }
}

/// Collect every row of a joined record file into memory.
pub fn read_joined(path: impl AsRef<Path>) -> Result<Vec<JoinedVariant>, RecfileError> {
    let reader = RecfileReader::open(path, RecordKind::Joined)?;
    reader
        .rows::<JoinedRow>()
        .map(|r| r.map(JoinedVariant::from))
        .collect()
}

/// Write joined variants to a record file.
pub fn write_joined<'a>(
    path: impl AsRef<Path>,
    variants: impl IntoIterator<Item = &'a JoinedVariant>,
) -> Result<u64, RecfileError> {
    let mut w = RecfileWriter::create(path, RecordKind::Joined)?;
    for v in variants {
        w.write_row(&JoinedRow::from(v.clone()))?;
    }
    let n = w.rows_written();
    w.finish()?;
    Ok(n)
}
