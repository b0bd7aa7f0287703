//! Baseline embedding-quality experiments: train a random forest on a
//! random sample of variant embeddings and predict held-out variant
//! properties that are explicitly present in the annotation text
//! (chromosome, reference allele). High held-out accuracy confirms the
//! embeddings capture at least what the annotations state.

pub mod forest;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::VariantKey;
use crate::store::{EmbeddingStore, StoreError};

pub use forest::{Dataset, ForestError, ForestHyperparams, RandomForest};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least n_train + 1 usable records, have {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("store error: {0}")]
    Store(#[from] StoreError),
    #[error("store key {0:?} is not a variant key; evaluation needs a variant-keyed store")]
    NotVariantKeyed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A prediction task whose label derives purely from the variant key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalTask {
    /// Predict the chromosome among the 22 autosomes; X/Y/MT records are
    /// filtered out with a logged count.
    Chromosome,
    /// Predict the reference allele among {A, C, G, T}; records with a
    /// multi-base reference allele are filtered out.
    RefAllele,
}

impl EvalTask {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chromosome" => Some(EvalTask::Chromosome),
            "ref-allele" | "ref_allele" => Some(EvalTask::RefAllele),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalTask::Chromosome => "chromosome",
            EvalTask::RefAllele => "ref-allele",
        }
    }

    /// Canonical class order for reports and confusion matrices.
    pub fn class_labels(&self) -> Vec<String> {
        match self {
            EvalTask::Chromosome => (1..=22).map(|i| i.to_string()).collect(),
            EvalTask::RefAllele => ["A", "C", "G", "T"].iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Class index of a variant, or None when the task filters it out.
    /// A pure function of the key: labels never leak from embeddings.
    pub fn label_of(&self, key: &VariantKey) -> Option<u16> {
        match self {
            EvalTask::Chromosome => key
                .chromosome
                .is_autosome()
                .then(|| (key.chromosome.rank() - 1) as u16),
            EvalTask::RefAllele => match key.ref_allele.as_str() {
                "A" => Some(0),
                "C" => Some(1),
                "G" => Some(2),
                "T" => Some(3),
                _ => None,
            },
        }
    }
}

/// Uniform random train/eval split without replacement: `n_train` indices
/// drawn with a seeded generator, the complement as the evaluation set.
/// Disjointness and completeness hold by construction.
pub fn split_train_eval(
    n_items: usize,
    n_train: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if n_train >= n_items {
        return Err(EvalError::InsufficientData(n_items));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n_items).collect();
    // Partial Fisher-Yates: the first n_train slots become the sample.
    for i in 0..n_train {
        let j = rng.gen_range(i..n_items);
        indices.swap(i, j);
    }
    let mut train: Vec<usize> = indices[..n_train].to_vec();
    train.sort_unstable();
    let mut in_train = vec![false; n_items];
    for &i in &train {
        in_train[i] = true;
    }
    let eval: Vec<usize> = (0..n_items).filter(|i| !in_train[*i]).collect();
    Ok((train, eval))
}

/// Evaluation outcome. The confusion matrix is true-class by
/// predicted-class in the task's canonical class order, and the reported
/// accuracy equals its trace over its total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub accuracy: f64,
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub n_train: usize,
    pub n_eval: usize,
    /// Records the task filtered out (other chromosomes, multi-base refs).
    pub filtered_out: u64,
    pub seed: u64,
    pub model_desc: String,
}

impl EvalReport {
    /// Accuracy recomputed from the confusion matrix; must equal
    /// `self.accuracy` exactly.
    pub fn accuracy_from_confusion(&self) -> f64 {
        let trace: u64 = (0..self.classes.len()).map(|i| self.confusion[i][i]).sum();
        let total: u64 = self.confusion.iter().flatten().sum();
        if total == 0 {
            0.0
        } else {
            trace as f64 / total as f64
        }
    }

    /// Plot-ready TSV: header row of predicted classes, one row per true
    /// class.
    pub fn write_confusion_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "true\\pred")?;
        for c in &self.classes {
            write!(out, "\t{c}")?;
        }
        writeln!(out)?;
        for (i, row) in self.confusion.iter().enumerate() {
            write!(out, "{}", self.classes[i])?;
            for v in row {
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Labeled evaluation data in memory: row-major vectors plus class ids.
pub struct LabeledVectors {
    pub features: Vec<f32>,
    pub labels: Vec<u16>,
    pub dim: usize,
    pub filtered_out: u64,
}

/// Load every labelable record of a variant-keyed store.
pub fn load_labeled_vectors(
    store: &EmbeddingStore,
    task: EvalTask,
) -> Result<LabeledVectors, EvalError> {
    let dim = store.dim();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut filtered_out = 0u64;
    for record in store.scan(None, None)? {
        let (key_str, vector) = record?;
        let key: VariantKey = key_str
            .parse()
            .map_err(|_| EvalError::NotVariantKeyed(key_str.clone()))?;
        match task.label_of(&key) {
            Some(label) => {
                features.extend_from_slice(vector.values());
                labels.push(label);
            }
            None => filtered_out += 1,
        }
    }
    Ok(LabeledVectors {
        features,
        labels,
        dim,
        filtered_out,
    })
}

/// Split, train, predict the complement, and assemble the report.
pub fn evaluate_vectors(
    data: &LabeledVectors,
    task: EvalTask,
    n_train: usize,
    seed: u64,
    hp: ForestHyperparams,
) -> Result<EvalReport, EvalError> {
    let classes = task.class_labels();
    let n = data.labels.len();
    let (train_idx, eval_idx) = split_train_eval(n, n_train, seed)?;

    let mut train_features = Vec::with_capacity(train_idx.len() * data.dim);
    let mut train_labels = Vec::with_capacity(train_idx.len());
    for &i in &train_idx {
        train_features.extend_from_slice(&data.features[i * data.dim..(i + 1) * data.dim]);
        train_labels.push(data.labels[i]);
    }
    let dataset = Dataset::new(&train_features, &train_labels, data.dim, classes.len())?;
    let hp = ForestHyperparams { seed, ..hp };
    let forest = RandomForest::fit(dataset, hp)?;

    let mut eval_features = Vec::with_capacity(eval_idx.len() * data.dim);
    for &i in &eval_idx {
        eval_features.extend_from_slice(&data.features[i * data.dim..(i + 1) * data.dim]);
    }
    let predictions = forest.predict_rows(&eval_features, data.dim);

    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    for (&i, &pred) in eval_idx.iter().zip(&predictions) {
        confusion[data.labels[i] as usize][pred as usize] += 1;
    }
    let trace: u64 = (0..classes.len()).map(|i| confusion[i][i]).sum();
    let accuracy = trace as f64 / eval_idx.len() as f64;

    Ok(EvalReport {
        task: task.name().to_string(),
        accuracy,
        classes,
        confusion,
        n_train: train_idx.len(),
        n_eval: eval_idx.len(),
        filtered_out: data.filtered_out,
        seed,
        model_desc: forest.describe(),
    })
}

/// Full store-to-report evaluation: load, split, train, predict, report.
pub fn evaluate_task(
    store: &EmbeddingStore,
    task: EvalTask,
    n_train: usize,
    seed: u64,
    hp: ForestHyperparams,
) -> Result<EvalReport, EvalError> {
    let data = load_labeled_vectors(store, task)?;
    evaluate_vectors(&data, task, n_train, seed, hp)
}

/// Serialize a report to pretty JSON at `path`.
pub fn write_report_json(report: &EvalReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, report)
        .map_err(|e| EvalError::Io(std::io::Error::other(e)))?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Two-sided normal-approximation binomial band around chance accuracy:
/// p +/- z * sqrt(p(1-p)/n). z = 2.5758 gives the 99% interval.
pub fn chance_band(p: f64, n: usize, z: f64) -> (f64, f64) {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    ((p - z * sigma).max(0.0), (p + z * sigma).min(1.0))
}
