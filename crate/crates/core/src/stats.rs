//! Streaming token statistics: single-pass min/max/mean/std plus a
//! fixed-width histogram.
//!
//! Mean and variance use Welford's update; partial accumulators merge
//! associatively (Chan et al.), so a parallel fold over corpus slices
//! produces the same statistics as one sequential pass: exactly for
//! min/max/count/histogram, to floating-point-merge precision for
//! mean/std. The standard deviation uses the population denominator n.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("cannot summarize an empty corpus")]
    EmptyCorpus,
    #[error("bin width must be >= 1")]
    InvalidBinWidth,
}

/// Single-pass accumulator for count/min/max/mean/variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
    min: u32,
    max: u32,
}

impl Default for RunningStats {
    fn default() -> Self {
        RunningStats {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: u32::MAX,
            max: 0,
        }
    }
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: u32) {
        self.count += 1;
        let x = value as f64;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }

    /// Associative merge of two accumulators.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (denominator n), the convention the reported
    /// statistics use.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Sample variance (denominator n - 1), for callers that want the
    /// inferential convention instead.
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn sample_std_dev(&self) -> f64 {
        self.sample_variance().sqrt()
    }

    pub fn min(&self) -> u32 {
        self.min
    }

    pub fn max(&self) -> u32 {
        self.max
    }
}

/// One histogram bin covering `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub start: u32,
    pub end: u32,
    pub count: u64,
}

/// Summary statistics over a token-count corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub min: u32,
    pub max: u32,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: u64,
    /// Fixed-width bins starting at 0, extended to cover `max`.
    pub histogram: Vec<HistogramBin>,
}

/// Summarize a stream of token counts in one pass.
pub fn summarize_tokens(
    counts: impl IntoIterator<Item = u32>,
    bin_width: u32,
) -> Result<TokenStats, StatsError> {
    if bin_width == 0 {
        return Err(StatsError::InvalidBinWidth);
    }
    let mut stats = RunningStats::new();
    let mut bins: Vec<u64> = Vec::new();
    for value in counts {
        stats.push(value);
        let idx = (value / bin_width) as usize;
        if idx >= bins.len() {
            bins.resize(idx + 1, 0);
        }
        bins[idx] += 1;
    }
    finish(stats, bins, bin_width)
}

/// Parallel summarization: slices are folded per thread and the partial
/// accumulators merged. Equal to the sequential result exactly for
/// min/max/count/histogram and to merge precision for mean/std.
pub fn summarize_tokens_parallel(counts: &[u32], bin_width: u32) -> Result<TokenStats, StatsError> {
    if bin_width == 0 {
        return Err(StatsError::InvalidBinWidth);
    }
    let (stats, bins) = counts
        .par_iter()
        .fold(
            || (RunningStats::new(), Vec::<u64>::new()),
            |(mut stats, mut bins), &value| {
                stats.push(value);
                let idx = (value / bin_width) as usize;
                if idx >= bins.len() {
                    bins.resize(idx + 1, 0);
                }
                bins[idx] += 1;
                (stats, bins)
            },
        )
        .reduce(
            || (RunningStats::new(), Vec::<u64>::new()),
            |(mut s1, mut b1), (s2, b2)| {
                s1.merge(&s2);
                if b2.len() > b1.len() {
                    b1.resize(b2.len(), 0);
                }
                for (i, c) in b2.into_iter().enumerate() {
                    b1[i] += c;
                }
                (s1, b1)
            },
        );
    finish(stats, bins, bin_width)
}

fn finish(stats: RunningStats, bins: Vec<u64>, bin_width: u32) -> Result<TokenStats, StatsError> {
    if stats.count() == 0 {
        return Err(StatsError::EmptyCorpus);
    }
    let histogram = bins
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            start: i as u32 * bin_width,
            end: (i as u32 + 1) * bin_width,
            count,
        })
        .collect();
    Ok(TokenStats {
        min: stats.min(),
        max: stats.max(),
        mean: stats.mean(),
        std: stats.std_dev(),
        count: stats.count(),
        histogram,
    })
}
