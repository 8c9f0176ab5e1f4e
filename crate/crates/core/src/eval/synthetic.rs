//! Planted-signal evaluator: stage `i` carries a label signal whose strength
//! grows with depth up to a ceiling, so the best per-stage depths are known
//! by construction.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EvalBudget, EvalError, Evaluation, Evaluator, Metrics};
use crate::arch::Architecture;
use crate::importance::FeatureMatrix;

pub const DEFAULT_SAMPLES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedStage {
    /// Depth at which the stage's signal saturates.
    pub ceiling: usize,
    pub gain: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedProfile {
    pub stages: Vec<PlantedStage>,
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

impl PlantedProfile {
    /// Only `informative` carries signal; every stage has unit noise.
    pub fn single_informative(stages: usize, informative: usize, ceiling: usize, gain: f64, seed: u64) -> Self {
        PlantedProfile {
            stages: (0..stages)
                .map(|i| PlantedStage {
                    ceiling: if i == informative { ceiling } else { 1 },
                    gain: if i == informative { gain } else { 0.0 },
                    noise_sigma: 1.0,
                })
                .collect(),
            seed,
            samples: DEFAULT_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.samples < 2 {
            return Err(EvalError::Profile("need at least 2 samples".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.ceiling == 0 {
                return Err(EvalError::Profile(format!("stage {i}: ceiling must be at least 1")));
            }
            if !(s.gain >= 0.0 && s.gain.is_finite()) {
                return Err(EvalError::Profile(format!("stage {i}: gain must be finite and non-negative")));
            }
            if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
                return Err(EvalError::Profile(format!("stage {i}: noise_sigma must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Planted signal strength `g·min(m, c)/c` of stage `i` at depth `m`.
    pub fn strength(&self, i: usize, modules: usize) -> f64 {
        let s = &self.stages[i];
        s.gain * modules.min(s.ceiling) as f64 / s.ceiling as f64
    }
}

// Independent ChaCha streams per purpose so that one stage's draws never
// depend on another stage's width or depth.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Balanced 0/1 labels in a seeded order.
pub fn planted_labels(samples: usize, seed: u64) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..samples).map(|i| usize::from(i >= samples / 2)).collect();
    labels.shuffle(&mut stream(seed, 0));
    labels
}

/// Features of `a` under profile `p`: stage `i` columns are
/// `strength_i(m_i)·y·w_i + ε`, with `y = ±1` from the labels, `w_i` a fixed
/// unit sign pattern and `ε ~ N(0, σ_i²)`. Noise and patterns are keyed by
/// (seed, stage) only, so changing one stage's depth leaves the other
/// stages' columns bit-identical.
pub fn synthetic_evaluate(a: &Architecture, p: &PlantedProfile) -> Result<FeatureMatrix, EvalError> {
    p.validate()?;
    if a.stage_count() != p.stages.len() {
        return Err(EvalError::Profile(format!(
            "profile has {} stages, architecture has {}",
            p.stages.len(),
            a.stage_count()
        )));
    }
    let n = p.samples;
    let labels = planted_labels(n, p.seed);
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();

    let blocks = a
        .stages()
        .iter()
        .enumerate()
        .map(|(i, stage)| {
            let c = stage.channels;
            let mut pattern_rng = stream(p.seed, 1 + 2 * i as u64);
            let unit = 1.0 / (c as f64).sqrt();
            let pattern: Vec<f64> = (0..c).map(|_| if pattern_rng.random::<bool>() { unit } else { -unit }).collect();
            let strength = p.strength(i, stage.modules);
            let sigma = p.stages[i].noise_sigma;
            let mut noise_rng = stream(p.seed, 2 + 2 * i as u64);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            // Noise draw order is column-major: (column, row).
            let mut block = DMatrix::zeros(n, c);
            for col in 0..c {
                for r in 0..n {
                    let eps = if sigma > 0.0 { sigma * normal.sample(&mut noise_rng) } else { 0.0 };
                    block[(r, col)] = strength * y[r] * pattern[col] + eps;
                }
            }
            block
        })
        .collect();
    FeatureMatrix::from_stage_blocks(blocks, labels).map_err(EvalError::Features)
}

#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    pub profile: PlantedProfile,
}

impl SyntheticEvaluator {
    pub fn new(profile: PlantedProfile) -> Self {
        SyntheticEvaluator { profile }
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, a: &Architecture, budget: &EvalBudget) -> Result<Evaluation, EvalError> {
        budget.validate()?;
        Ok(Evaluation { features: synthetic_evaluate(a, &self.profile)?, metrics: Metrics::default(), artifacts: None })
    }
}
