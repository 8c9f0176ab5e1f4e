//! Supervised path-energy ranking on quantized features.
//!
//! This is a surrogate for latent-factor infinite feature selection: each
//! column is cut into `T` equal-frequency tokens, the relevance of a column
//! is how much the class distribution shifts between its tokens, and the
//! graph weights are geometric means of relevances. The score is the same
//! path energy used by [`super::inffs`].

use nalgebra::{DMatrix, DVector};

use super::inffs::path_energy;
use super::ImportanceError;

/// Token index of every value: the number of `k/T` empirical quantiles
/// (`k = 1..T`) strictly below it.
pub fn quantize(values: &[f64], tokens: usize) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..tokens)
        .map(|k| sorted[((k * n).div_ceil(tokens)).saturating_sub(1)])
        .collect();
    values
        .iter()
        .map(|v| cuts.iter().filter(|&&c| *v > c).count())
        .collect()
}

/// Between-token share of the class-indicator variance:
/// `Σ_c Σ_t n_t (p(c|t) − p(c))² / Σ_c N·p(c)(1 − p(c))`, in `[0, 1]`.
pub fn token_relevance(tokens: &[usize], labels: &[usize], n_tokens: usize, n_classes: usize) -> f64 {
    let n = labels.len() as f64;
    let mut joint = vec![vec![0.0_f64; n_classes]; n_tokens];
    let mut class_count = vec![0.0_f64; n_classes];
    for (&t, &c) in tokens.iter().zip(labels) {
        joint[t][c] += 1.0;
        class_count[c] += 1.0;
    }
    let mut between = 0.0;
    for row in &joint {
        let n_t: f64 = row.iter().sum();
        if n_t == 0.0 {
            continue;
        }
        for (c, &count) in row.iter().enumerate() {
            let diff = count / n_t - class_count[c] / n;
            between += n_t * diff * diff;
        }
    }
    let total: f64 = class_count.iter().map(|&k| k * (1.0 - k / n)).sum();
    if total == 0.0 {
        0.0
    } else {
        between / total
    }
}

pub fn ilfs_scores(
    x: &DMatrix<f64>,
    labels: &[usize],
    tokens: usize,
    beta: f64,
) -> Result<DVector<f64>, ImportanceError> {
    let (n, d) = x.shape();
    if d < 2 {
        return Err(ImportanceError::Shape(format!("need at least 2 features, got {d}")));
    }
    if labels.len() != n {
        return Err(ImportanceError::Shape(format!("{} labels for {n} samples", labels.len())));
    }
    if tokens < 2 {
        return Err(ImportanceError::Parameter(format!("need at least 2 tokens, got {tokens}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ImportanceError::NonFinite);
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let present = {
        let mut seen = vec![false; n_classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if present < 2 {
        return Err(ImportanceError::SingleClass);
    }

    let relevance: Vec<f64> = x
        .column_iter()
        .map(|col| token_relevance(&quantize(col.as_slice(), tokens), labels, tokens, n_classes))
        .collect();
    let max = relevance.iter().cloned().fold(0.0, f64::max);
    let adjacency = DMatrix::from_fn(d, d, |i, j| {
        let g = (relevance[i] * relevance[j]).sqrt();
        if max > 0.0 {
            g / max
        } else {
            0.0
        }
    });
    path_energy(&adjacency, beta)
}
