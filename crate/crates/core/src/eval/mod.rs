//! The evaluator contract: turn a descriptor and a training budget into
//! pooled stage features plus whatever metrics the trainer reports.

pub mod bridge;
pub mod bundle;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::Architecture;
use crate::importance::{FeatureMatrix, ImportanceError};

pub use bridge::{BridgeConfig, BridgeEvaluator};
pub use bundle::BundleError;
pub use synthetic::{synthetic_evaluate, PlantedProfile, PlantedStage, SyntheticEvaluator};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error("invalid planted profile: {0}")]
    Profile(String),
    #[error("trainer could not be launched: {0}")]
    Launch(String),
    #[error("trainer exited with status {code:?}\n{log}")]
    TrainerExit { code: Option<i32>, log: String },
    #[error("trainer reported failure: {message}\n{log}")]
    TrainerFailed { message: String, log: String },
    #[error("trainer timed out after {seconds} s\n{log}")]
    Timeout { seconds: f64, log: String },
    #[error("protocol violation: {message}\n{log}")]
    Protocol { message: String, log: String },
    #[error("bundle: {source}\n{log}")]
    Bundle { source: BundleError, log: String },
    #[error("trainer produced non-finite features: {message}\n{log}")]
    NonFiniteFeatures { message: String, log: String },
    #[error("feature layout {got:?} does not match stage widths {expected:?}")]
    Layout { expected: Vec<usize>, got: Vec<usize> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Features(ImportanceError),
}

impl EvalError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::Budget(_) => "budget",
            EvalError::Profile(_) => "profile",
            EvalError::Launch(_) => "launch",
            EvalError::TrainerExit { .. } => "trainer_exit",
            EvalError::TrainerFailed { .. } => "trainer_failed",
            EvalError::Timeout { .. } => "timeout",
            EvalError::Protocol { .. } => "protocol",
            EvalError::Bundle { .. } => "bundle",
            EvalError::NonFiniteFeatures { .. } => "non_finite",
            EvalError::Layout { .. } => "layout",
            EvalError::Io(_) => "io",
            EvalError::Features(_) => "features",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Scratch,
    WeightTransfer,
}

/// Pre-trained network whose weights seed a weight-transfer evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DonorRef {
    pub architecture: Architecture,
    /// Opaque locator understood by the trainer (usually a file path).
    pub weights: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBudget {
    pub epochs: u32,
    pub mode: EvalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor: Option<DonorRef>,
    pub seed: u64,
}

impl EvalBudget {
    pub fn scratch(epochs: u32, seed: u64) -> Self {
        EvalBudget { epochs, mode: EvalMode::Scratch, donor: None, seed }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.epochs == 0 {
            return Err(EvalError::Budget("epochs must be at least 1".into()));
        }
        match (self.mode, &self.donor) {
            (EvalMode::Scratch, Some(_)) => Err(EvalError::Budget("donor given for a scratch budget".into())),
            (EvalMode::WeightTransfer, None) => Err(EvalError::Budget("weight_transfer needs a donor".into())),
            _ => Ok(()),
        }
    }

    /// Stable key for caching evaluations of one descriptor under this budget.
    pub fn cache_key(&self, a: &Architecture) -> String {
        let budget = serde_json::to_string(self).expect("budget serialization cannot fail");
        format!("{}|{budget}", a.id())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub features: FeatureMatrix,
    pub metrics: Metrics,
    /// Directory holding trained weights and logs, when the evaluator keeps any.
    pub artifacts: Option<String>,
}

/// Trains (or simulates training of) a descriptor and extracts globally
/// pooled features at the end of every stage.
///
/// Implementations must be deterministic in `(architecture, budget)` and must
/// emit one feature column per stage channel, so that networks differing only
/// in depth produce identical column layouts.
pub trait Evaluator {
    fn evaluate(&self, a: &Architecture, budget: &EvalBudget) -> Result<Evaluation, EvalError>;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, a: &Architecture, budget: &EvalBudget) -> Result<Evaluation, EvalError> {
        (**self).evaluate(a, budget)
    }
}

/// Checks that the features have one column per channel of every stage.
pub fn check_layout(a: &Architecture, f: &FeatureMatrix) -> Result<(), EvalError> {
    let expected = a.widths();
    let got = f.layout();
    if expected != got {
        return Err(EvalError::Layout { expected, got });
    }
    Ok(())
}
