//! The `search` run configuration file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use swnas::cost::EmissionsInput;
use swnas::eval::{BridgeConfig, PlantedProfile};
use swnas::search::SearchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorChoice {
    #[default]
    Synthetic,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub search: SearchConfig,
    #[serde(default)]
    pub evaluator: EvaluatorChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PlantedProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge: Option<BridgeConfig>,
    /// Used to annotate the final network's cost report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emissions: Option<EmissionsInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Routes one seed to every random source of the run.
    pub fn apply_seed(&mut self, seed: u64) {
        self.search.budget.seed = seed;
        self.search.scoring.seed = seed;
        if let Some(p) = self.synthetic.as_mut() {
            p.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.search.validate().map_err(|e| e.to_string())?;
        match self.evaluator {
            EvaluatorChoice::Synthetic => {
                let p = self.synthetic.as_ref().ok_or("evaluator `synthetic` needs a `synthetic` section")?;
                p.validate().map_err(|e| e.to_string())?;
                if p.stages.len() != self.search.stage_count() {
                    return Err(format!(
                        "synthetic profile has {} stages, search has {}",
                        p.stages.len(),
                        self.search.stage_count()
                    ));
                }
            }
            EvaluatorChoice::Bridge => {
                let b = self.bridge.as_ref().ok_or("evaluator `bridge` needs a `bridge` section")?;
                if b.command.is_empty() {
                    return Err("bridge.command must not be empty".into());
                }
                if b.timeout_secs.is_nan() || b.timeout_secs < 0.0 {
                    return Err("bridge.timeout_secs must be non-negative".into());
                }
            }
        }
        if let Some(e) = &self.emissions {
            e.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}
