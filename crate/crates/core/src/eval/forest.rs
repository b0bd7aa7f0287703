//! Random forest classifier built from scratch: depth-limited CART trees
//! with gini impurity, bootstrap samples, and random feature subsetting
//! at every split. The baseline evaluation tasks carry no runtime model
//! dependency because the classifier lives in-repo.
//!
//! Training is deterministic for a fixed seed: every tree derives its own
//! generator from (seed, tree index), so parallel and sequential training
//! produce identical forests.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    #[error("training data holds fewer than two distinct classes")]
    DegenerateLabels,
    #[error("feature matrix shape mismatch: {0}")]
    Shape(String),
}

/// Forest hyperparameters. The defaults are 100 trees of depth <= 16
/// with sqrt(dim) candidate features per split and gini impurity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per split; None means sqrt(dim), rounded down.
    pub features_per_split: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        ForestHyperparams {
            n_trees: 100,
            max_depth: 16,
            features_per_split: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

impl ForestHyperparams {
    pub fn describe(&self) -> String {
        format!(
            "random-forest(trees={}, max_depth={}, features_per_split={}, seed={})",
            self.n_trees,
            self.max_depth,
            self.features_per_split
                .map_or("sqrt(dim)".to_string(), |m| m.to_string()),
            self.seed
        )
    }
}

/// Row-major feature matrix borrowed by the trainer.
#[derive(Clone, Copy)]
pub struct Dataset<'a> {
    features: &'a [f32],
    labels: &'a [u16],
    n_rows: usize,
    dim: usize,
    n_classes: usize,
}

impl<'a> Dataset<'a> {
    pub fn new(
        features: &'a [f32],
        labels: &'a [u16],
        dim: usize,
        n_classes: usize,
    ) -> Result<Self, ForestError> {
        if dim == 0 || labels.is_empty() || features.len() != labels.len() * dim {
            return Err(ForestError::Shape(format!(
                "{} features, {} labels, dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l as usize >= n_classes) {
            return Err(ForestError::Shape("label outside class range".into()));
        }
        Ok(Dataset {
            features,
            labels,
            n_rows: labels.len(),
            dim,
            n_classes,
        })
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> f32 {
        self.features[row * self.dim + feature]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        class: u16,
    },
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f32]) -> u16 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

struct TreeBuilder<'a> {
    data: Dataset<'a>,
    rng: ChaCha8Rng,
    hp: ForestHyperparams,
    features_per_split: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f32, u16)>,
}

impl<'a> TreeBuilder<'a> {
    fn majority(&self, indices: &[usize]) -> u16 {
        let mut counts = vec![0u32; self.data.n_classes];
        for &i in indices {
            counts[self.data.labels[i] as usize] += 1;
        }
        // Ties break toward the smallest class index.
        let mut best = 0usize;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        best as u16
    }

    fn is_pure(&self, indices: &[usize]) -> bool {
        let first = self.data.labels[indices[0]];
        indices.iter().all(|&i| self.data.labels[i] == first)
    }

    /// Best (threshold, weighted-gini) for one feature via a sorted sweep,
    /// or None when every value is identical.
    fn best_split_on(&mut self, indices: &[usize], feature: usize) -> Option<(f32, f64)> {
        self.scratch.clear();
        for &i in indices {
            self.scratch
                .push((self.data.value(i, feature), self.data.labels[i]));
        }
        self.scratch
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let n = self.scratch.len();
        let k = self.data.n_classes;
        let mut right_counts = vec![0u32; k];
        for &(_, label) in self.scratch.iter() {
            right_counts[label as usize] += 1;
        }
        let mut left_counts = vec![0u32; k];
        let mut best: Option<(f32, f64)> = None;

        let gini = |counts: &[u32], total: f64| -> f64 {
            if total == 0.0 {
                return 0.0;
            }
            let sum_sq: f64 = counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / total;
                    p * p
                })
                .sum();
            1.0 - sum_sq
        };

        for i in 0..n - 1 {
            let (value, label) = self.scratch[i];
            left_counts[label as usize] += 1;
            right_counts[label as usize] -= 1;
            let next_value = self.scratch[i + 1].0;
            if next_value <= value {
                continue; // no threshold separates equal values
            }
            let n_left = (i + 1) as f64;
            let n_right = (n - i - 1) as f64;
            let weighted = (n_left * gini(&left_counts, n_left)
                + n_right * gini(&right_counts, n_right))
                / n as f64;
            // Midpoint threshold; <= goes left.
            let threshold = value + (next_value - value) / 2.0;
            if best.is_none_or(|(_, g)| weighted < g) {
                best = Some((threshold, weighted));
            }
        }
        best
    }

    fn build(&mut self, indices: &mut Vec<usize>, depth: usize) -> u32 {
        let node_id = self.nodes.len() as u32;
        if depth >= self.hp.max_depth
            || indices.len() < self.hp.min_samples_split
            || self.is_pure(indices)
        {
            self.nodes.push(Node::Leaf {
                class: self.majority(indices),
            });
            return node_id;
        }

        // Random feature subset without replacement.
        let dim = self.data.dim;
        let mut candidates: Vec<usize> = Vec::with_capacity(self.features_per_split);
        while candidates.len() < self.features_per_split {
            let f = (self.rng.next_u64() % dim as u64) as usize;
            if !candidates.contains(&f) {
                candidates.push(f);
            }
        }

        let parent_gini = {
            let mut counts = vec![0u32; self.data.n_classes];
            for &i in indices.iter() {
                counts[self.data.labels[i] as usize] += 1;
            }
            let total = indices.len() as f64;
            1.0 - counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / total;
                    p * p
                })
                .sum::<f64>()
        };

        let mut best: Option<(usize, f32, f64)> = None;
        for f in candidates {
            if let Some((threshold, weighted)) = self.best_split_on(indices, f) {
                if best.is_none_or(|(_, _, g)| weighted < g) {
                    best = Some((f, threshold, weighted));
                }
            }
        }
        let Some((feature, threshold, weighted)) = best else {
            self.nodes.push(Node::Leaf {
                class: self.majority(indices),
            });
            return node_id;
        };
        if weighted >= parent_gini {
            self.nodes.push(Node::Leaf {
                class: self.majority(indices),
            });
            return node_id;
        }

        let mut left: Vec<usize> = Vec::new();
        let mut right: Vec<usize> = Vec::new();
        for &i in indices.iter() {
            if self.data.value(i, feature) <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        debug_assert!(!left.is_empty() && !right.is_empty());
        indices.clear();
        indices.shrink_to_fit();

        self.nodes.push(Node::Leaf { class: 0 }); // placeholder
        let left_id = self.build(&mut left, depth + 1);
        let right_id = self.build(&mut right, depth + 1);
        self.nodes[node_id as usize] = Node::Split {
            feature: feature as u32,
            threshold,
            left: left_id,
            right: right_id,
        };
        node_id
    }
}

/// Trained forest.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
    hp: ForestHyperparams,
}

impl RandomForest {
    /// Fit on a dataset. Trees train in parallel; the forest is identical
    /// for a fixed seed regardless of thread count.
    pub fn fit(data: Dataset<'_>, hp: ForestHyperparams) -> Result<Self, ForestError> {
        let mut present = vec![false; data.n_classes];
        for &l in data.labels {
            present[l as usize] = true;
        }
        if present.iter().filter(|p| **p).count() < 2 {
            return Err(ForestError::DegenerateLabels);
        }
        let features_per_split = hp
            .features_per_split
            .unwrap_or_else(|| (data.dim as f64).sqrt() as usize)
            .clamp(1, data.dim);

        let trees: Vec<DecisionTree> = (0..hp.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(
                    hp.seed ^ (t as u64).wrapping_mul(0x9E37),
                ));
                let mut bootstrap: Vec<usize> = (0..data.n_rows())
                    .map(|_| rng.gen_range(0..data.n_rows()))
                    .collect();
                let mut builder = TreeBuilder {
                    data,
                    rng,
                    hp,
                    features_per_split,
                    nodes: Vec::new(),
                    scratch: Vec::new(),
                };
                builder.build(&mut bootstrap, 0);
                DecisionTree {
                    nodes: builder.nodes,
                }
            })
            .collect();
        Ok(RandomForest {
            trees,
            n_classes: data.n_classes,
            hp,
        })
    }

    /// Majority vote across trees; ties break toward the smallest class.
    pub fn predict(&self, row: &[f32]) -> u16 {
        let mut votes = vec![0u32; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(row) as usize] += 1;
        }
        let mut best = 0usize;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best as u16
    }

    /// Predict many rows in parallel, preserving order.
    pub fn predict_rows(&self, features: &[f32], dim: usize) -> Vec<u16> {
        features
            .par_chunks(dim)
            .map(|row| self.predict(row))
            .collect()
    }

    pub fn describe(&self) -> String {
        self.hp.describe()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
