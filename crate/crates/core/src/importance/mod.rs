//! Per-feature importance scores and their aggregation into stage scores.
//!
//! Features of all stages are scored together in one fit so that the scores
//! share a scale; a stage's importance is the mean score over its columns.

mod features;
pub mod ilfs;
pub mod inffs;
pub mod pls;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{FeatureMatrix, StageSlice};
pub use ilfs::ilfs_scores;
pub use inffs::inffs_scores;
pub use pls::{pls_fit, pls_fit_single, vip_scores, PlsModel};

/// Rows scored at most; larger matrices are subsampled with a fixed seed.
pub const DEFAULT_SAMPLE_CAP: usize = 3000;

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("response has zero variance")]
    ZeroVarianceResponse,
    #[error("{requested} components requested, at most {max} possible")]
    TooManyComponents { requested: usize, max: usize },
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("I − rA is singular")]
    Singular,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("criterion mismatch: {0:?} vs {1:?}")]
    CriterionMismatch(CriterionKind, CriterionKind),
    #[error("stage count mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriterionKind {
    #[serde(rename = "pls")]
    Pls,
    #[serde(rename = "inffs")]
    InfFs,
    #[serde(rename = "ilfs_surrogate", alias = "ilfs")]
    IlFs,
}

/// A scoring criterion together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", deny_unknown_fields)]
pub enum Criterion {
    /// PLS fit on class indicators, scored by VIP.
    #[serde(rename = "pls")]
    Pls {
        #[serde(default = "default_components")]
        components: usize,
    },
    /// Unsupervised path energy over dispersion and rank correlation.
    #[serde(rename = "inffs")]
    InfFs {
        #[serde(default = "default_alpha_mix")]
        alpha_mix: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    /// Supervised path energy over quantized features (surrogate).
    #[serde(rename = "ilfs_surrogate", alias = "ilfs")]
    IlFs {
        #[serde(default = "default_tokens")]
        tokens: usize,
        #[serde(default = "default_beta")]
        beta: f64,
    },
}

fn default_components() -> usize {
    2
}
fn default_alpha_mix() -> f64 {
    inffs::DEFAULT_ALPHA_MIX
}
fn default_beta() -> f64 {
    inffs::DEFAULT_BETA
}
fn default_tokens() -> usize {
    4
}

impl Default for Criterion {
    fn default() -> Self {
        Criterion::Pls { components: default_components() }
    }
}

impl Criterion {
    /// True for criteria that approximate a published method rather than reproduce it.
    pub fn is_surrogate(&self) -> bool {
        matches!(self, Criterion::IlFs { .. })
    }

    pub fn kind(&self) -> CriterionKind {
        match self {
            Criterion::Pls { .. } => CriterionKind::Pls,
            Criterion::InfFs { .. } => CriterionKind::InfFs,
            Criterion::IlFs { .. } => CriterionKind::IlFs,
        }
    }

    /// Per-feature scores over the whole matrix.
    pub fn feature_scores(&self, f: &FeatureMatrix) -> Result<DVector<f64>, ImportanceError> {
        match *self {
            Criterion::Pls { components } => {
                let y = pls::class_indicators(f.labels());
                vip_scores(&pls_fit(f.data(), &y, components)?)
            }
            Criterion::InfFs { alpha_mix, beta } => inffs_scores(f.data(), alpha_mix, beta),
            Criterion::IlFs { tokens, beta } => ilfs_scores(f.data(), f.labels(), tokens, beta),
        }
    }
}

/// Importance of every stage of one network under one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScores {
    pub alpha: Vec<f64>,
    pub criterion: CriterionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptions {
    pub sample_cap: usize,
    pub seed: u64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { sample_cap: DEFAULT_SAMPLE_CAP, seed: 0 }
    }
}

/// Mean of the per-feature scores within each stage's slice.
pub fn aggregate(scores: &DVector<f64>, slices: &[StageSlice]) -> Vec<f64> {
    slices
        .iter()
        .map(|s| s.range().map(|j| scores[j]).sum::<f64>() / s.len() as f64)
        .collect()
}

pub fn stage_scores(
    f: &FeatureMatrix,
    criterion: &Criterion,
    options: ScoreOptions,
) -> Result<StageScores, ImportanceError> {
    let sampled = f.subsample(options.sample_cap, options.seed);
    let scores = criterion.feature_scores(&sampled)?;
    Ok(StageScores { alpha: aggregate(&scores, f.slices()), criterion: criterion.kind() })
}
