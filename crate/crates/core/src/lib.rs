//! Stage-wise depth search for convolutional networks.
//!
//! A network is a sequence of stages, each repeating one kind of module at a
//! fixed resolution. The search grows stages one step at a time and keeps
//! the growth only where the stage's pooled features became more important
//! under a feature-importance criterion (PLS/VIP, inf-FS or an il-FS
//! surrogate). Training is hidden behind the [`eval::Evaluator`] trait; a
//! planted-signal evaluator makes the search checkable without a GPU.

pub mod arch;
pub mod cost;
pub mod eval;
pub mod importance;
pub mod search;
pub mod transfer;

pub use arch::{Architecture, ModuleKind, StageSpec};
pub use cost::{cost_report, emissions, CostProfiles, CostReport, EmissionsInput};
pub use eval::{EvalBudget, EvalMode, Evaluator, PlantedProfile, SyntheticEvaluator};
pub use importance::{stage_scores, Criterion, FeatureMatrix, ScoreOptions, StageScores};
pub use search::{compare_stage_scores, run_search, SearchConfig, SearchLedger};
pub use transfer::{plan_transfer, TransferError, TransferPlan};
