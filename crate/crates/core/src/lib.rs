//! Variant annotation and embedding pipeline.
//!
//! The crate is organized along the pipeline stages:
//!
//! - [`model`]: shared domain types (variant identity, annotation payloads)
//! - [`ingest`]: streaming parsers for FAVOR-, ClinVar-, and GWAS
//!   Catalog-style source tables
//! - [`recfile`]: typed intermediate record files passed between stages
//! - [`join`]: multi-source merge keyed on variant identity with
//!   ref/alt flip resolution
//! - [`annotate`]: semantic text rendering from joined records
//! - [`tokenizer`]: whitespace and byte-pair-encoding token counting
//! - [`stats`]: streaming token statistics with parallel merge
//! - [`embed`]: pluggable embedding backends, batch planning, and the
//!   checkpointed batch runner
//! - [`store`]: sharded binary embedding store with a JSON manifest
//! - [`aggregate`]: dosage-weighted individual-level embeddings
//! - [`eval`]: baseline embedding-quality tasks on a random forest

pub mod aggregate;
pub mod annotate;
pub mod embed;
pub mod eval;
pub mod ingest;
pub mod join;
pub mod model;
pub mod recfile;
pub mod stats;
pub mod store;
pub mod tokenizer;

pub use model::{
    AnnotationText, Chromosome, EmbeddingVector, JoinedVariant, ModelError, VariantKey,
};
