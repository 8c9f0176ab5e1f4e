//! Evaluator backed by an external trainer process.
//!
//! Protocol, per evaluation, inside a private working directory:
//! 1. write `request.json` (and `transfer_plan.json` for weight transfer);
//! 2. launch `<trainer-cmd…> --workdir <dir>` with output captured to `trainer.log`;
//! 3. poll `status.json` and the process until it finishes or the timeout passes;
//! 4. validate and load the feature bundle written next to the request.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::bundle::{self, BundleError};
use super::{check_layout, DonorRef, EvalBudget, EvalError, EvalMode, Evaluation, Evaluator, Metrics};
use crate::arch::Architecture;
use crate::transfer::plan_transfer;

pub const REQUEST_FILE: &str = "request.json";
pub const STATUS_FILE: &str = "status.json";
pub const LOG_FILE: &str = "trainer.log";
pub const PLAN_FILE: &str = "transfer_plan.json";

const LOG_EXCERPT_LINES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    /// Trainer program followed by its fixed arguments.
    pub command: Vec<String>,
    /// Parent directory for per-evaluation working directories.
    pub workdir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_poll")]
    pub poll_millis: u64,
    #[serde(default = "default_max_samples")]
    pub max_feature_samples: usize,
}

fn default_timeout() -> f64 {
    24.0 * 3600.0
}
fn default_poll() -> u64 {
    200
}
fn default_max_samples() -> usize {
    crate::importance::DEFAULT_SAMPLE_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerRequest {
    pub architecture: Architecture,
    pub epochs: u32,
    pub mode: EvalMode,
    pub seed: u64,
    pub max_feature_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor: Option<RequestDonor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestDonor {
    pub architecture: Architecture,
    pub weights: String,
    pub plan_file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerStatus {
    pub state: TrainerState,
    #[serde(default)]
    pub accuracy: Option<f64>,
    #[serde(default)]
    pub wall_seconds: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BridgeEvaluator {
    pub config: BridgeConfig,
}

/// Last lines of the trainer log, or a note when there is none.
pub fn log_excerpt(dir: &Path) -> String {
    match fs::read_to_string(dir.join(LOG_FILE)) {
        Ok(text) => {
            let lines: Vec<&str> = text.lines().collect();
            let start = lines.len().saturating_sub(LOG_EXCERPT_LINES);
            lines[start..].join("\n")
        }
        Err(_) => "(no trainer log)".to_string(),
    }
}

fn read_status(dir: &Path) -> Option<TrainerStatus> {
    let bytes = fs::read(dir.join(STATUS_FILE)).ok()?;
    serde_json::from_slice(&bytes).ok()
}

fn kill(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

impl BridgeEvaluator {
    pub fn new(config: BridgeConfig) -> Self {
        BridgeEvaluator { config }
    }

    /// Working directory for one (descriptor, budget) pair.
    pub fn workdir_for(&self, a: &Architecture, budget: &EvalBudget) -> PathBuf {
        let key = budget.cache_key(a);
        let digest = {
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest(key.as_bytes()))
        };
        self.config.workdir.join(format!("eval-{}", &digest[..16]))
    }

    fn write_request(&self, dir: &Path, a: &Architecture, budget: &EvalBudget) -> Result<(), EvalError> {
        let donor = match &budget.donor {
            Some(DonorRef { architecture, weights }) => {
                let plan = plan_transfer(a, architecture)
                    .map_err(|e| EvalError::Budget(format!("weight transfer: {e}")))?;
                fs::write(dir.join(PLAN_FILE), plan.to_json())?;
                Some(RequestDonor {
                    architecture: architecture.clone(),
                    weights: weights.clone(),
                    plan_file: PLAN_FILE.to_string(),
                })
            }
            None => None,
        };
        let request = TrainerRequest {
            architecture: a.clone(),
            epochs: budget.epochs,
            mode: budget.mode,
            seed: budget.seed,
            max_feature_samples: self.config.max_feature_samples,
            donor,
        };
        let json = serde_json::to_vec_pretty(&request).expect("request serialization cannot fail");
        fs::write(dir.join(REQUEST_FILE), json)?;
        Ok(())
    }

    fn launch(&self, dir: &Path) -> Result<Child, EvalError> {
        let (program, args) = self
            .config
            .command
            .split_first()
            .ok_or_else(|| EvalError::Launch("empty trainer command".into()))?;
        let log = File::create(dir.join(LOG_FILE))?;
        let log_err = log.try_clone()?;
        Command::new(program)
            .args(args)
            .arg("--workdir")
            .arg(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::from(log))
            .stderr(Stdio::from(log_err))
            .spawn()
            .map_err(|e| EvalError::Launch(format!("{program}: {e}")))
    }

    /// Waits for the trainer; returns its final status.
    fn supervise(&self, dir: &Path, mut child: Child) -> Result<TrainerStatus, EvalError> {
        let timeout = Duration::try_from_secs_f64(self.config.timeout_secs.max(0.0)).unwrap_or(Duration::MAX);
        let poll = Duration::from_millis(self.config.poll_millis.max(1));
        let started = Instant::now();
        loop {
            if started.elapsed() >= timeout {
                kill(&mut child);
                return Err(EvalError::Timeout { seconds: self.config.timeout_secs, log: log_excerpt(dir) });
            }
            let exited = child.try_wait()?;
            let status = read_status(dir);
            if let Some(TrainerStatus { state: TrainerState::Failed, error, .. }) = &status {
                if exited.is_none() {
                    kill(&mut child);
                }
                return Err(EvalError::TrainerFailed {
                    message: error.clone().unwrap_or_else(|| "unspecified".into()),
                    log: log_excerpt(dir),
                });
            }
            if let Some(code) = exited {
                if !code.success() {
                    return Err(EvalError::TrainerExit { code: code.code(), log: log_excerpt(dir) });
                }
                return match read_status(dir) {
                    Some(s) if s.state == TrainerState::Done => Ok(s),
                    Some(s) => Err(EvalError::Protocol {
                        message: format!("trainer exited with status state {:?}", s.state),
                        log: log_excerpt(dir),
                    }),
                    None => Err(EvalError::Protocol {
                        message: format!("trainer exited without a readable {STATUS_FILE}"),
                        log: log_excerpt(dir),
                    }),
                };
            }
            thread::sleep(poll.min(timeout.saturating_sub(started.elapsed())).max(Duration::from_millis(1)));
        }
    }

    pub fn bridge_evaluate(&self, a: &Architecture, budget: &EvalBudget, dir: &Path) -> Result<Evaluation, EvalError> {
        budget.validate()?;
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::create_dir_all(dir)?;
        self.write_request(dir, a, budget)?;
        let child = self.launch(dir)?;
        let status = self.supervise(dir, child)?;

        let (features, _) = bundle::read_bundle(dir).map_err(|source| match source {
            BundleError::NonFinite { file } => {
                EvalError::NonFiniteFeatures { message: file, log: log_excerpt(dir) }
            }
            source => EvalError::Bundle { source, log: log_excerpt(dir) },
        })?;
        check_layout(a, &features)?;
        Ok(Evaluation {
            features,
            metrics: Metrics { accuracy: status.accuracy, wall_seconds: status.wall_seconds },
            artifacts: Some(dir.display().to_string()),
        })
    }
}

impl Evaluator for BridgeEvaluator {
    fn evaluate(&self, a: &Architecture, budget: &EvalBudget) -> Result<Evaluation, EvalError> {
        let dir = self.workdir_for(a, budget);
        self.bridge_evaluate(a, budget, &dir)
    }
}
