use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ImportanceError;

/// Columns `[start, end)` of the feature matrix belonging to one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSlice {
    pub stage: usize,
    pub start: usize,
    pub end: usize,
}

impl StageSlice {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Pooled stage activations (samples × features) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    labels: Vec<usize>,
    slices: Vec<StageSlice>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, labels: Vec<usize>, slices: Vec<StageSlice>) -> Result<Self, ImportanceError> {
        let (n, d) = data.shape();
        if n < 2 {
            return Err(ImportanceError::Shape(format!("need at least 2 samples, got {n}")));
        }
        if d == 0 {
            return Err(ImportanceError::Shape("need at least 1 feature".into()));
        }
        if labels.len() != n {
            return Err(ImportanceError::Shape(format!("{} labels for {n} samples", labels.len())));
        }
        let mut next = 0;
        for (i, s) in slices.iter().enumerate() {
            if s.stage != i || s.start != next || s.end <= s.start {
                return Err(ImportanceError::Shape(format!(
                    "stage slice {i} ({}..{}) is not contiguous",
                    s.start, s.end
                )));
            }
            next = s.end;
        }
        if next != d {
            return Err(ImportanceError::Shape(format!("stage slices cover {next} of {d} columns")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImportanceError::NonFinite);
        }
        Ok(FeatureMatrix { data, labels, slices })
    }

    /// Concatenates per-stage blocks column-wise, one slice per block.
    pub fn from_stage_blocks(blocks: Vec<DMatrix<f64>>, labels: Vec<usize>) -> Result<Self, ImportanceError> {
        let n = blocks.first().map(|b| b.nrows()).unwrap_or(0);
        if blocks.iter().any(|b| b.nrows() != n) {
            return Err(ImportanceError::Shape("stage blocks have differing row counts".into()));
        }
        let d: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut data = DMatrix::zeros(n, d);
        let mut slices = Vec::with_capacity(blocks.len());
        let mut start = 0;
        for (stage, b) in blocks.iter().enumerate() {
            data.columns_mut(start, b.ncols()).copy_from(b);
            slices.push(StageSlice { stage, start, end: start + b.ncols() });
            start += b.ncols();
        }
        Self::new(data, labels, slices)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn slices(&self) -> &[StageSlice] {
        &self.slices
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// Per-stage column counts.
    pub fn layout(&self) -> Vec<usize> {
        self.slices.iter().map(StageSlice::len).collect()
    }

    /// Uniform row subsample of at most `cap` rows, kept in original order.
    pub fn subsample(&self, cap: usize, seed: u64) -> FeatureMatrix {
        if self.rows() <= cap {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, self.rows(), cap).into_vec();
        picked.sort_unstable();
        FeatureMatrix {
            data: self.data.select_rows(picked.iter()),
            labels: picked.iter().map(|&r| self.labels[r]).collect(),
            slices: self.slices.clone(),
        }
    }
}
