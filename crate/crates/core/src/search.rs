//! Stage-wise depth search.
//!
//! Starting from a uniform network `A`, every iteration builds a temporary
//! network `T` with `δ` extra modules in every stage, scores the stages of
//! both, and deepens exactly those stages of `A` whose score improved
//! (strictly). The result is the next iteration's input.
//!
//! Scores are cached per (descriptor id, budget). Each iteration evaluates
//! at most `T` and the candidate, so a run of `n` iterations evaluates at
//! most `2n + 1` distinct descriptors.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{ArchError, Architecture, ModuleKind};
use crate::eval::{check_layout, EvalBudget, EvalError, Evaluator, Metrics};
use crate::importance::{stage_scores, Criterion, ImportanceError, ScoreOptions, StageScores};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("iteration {iteration}, {role:?} network: {source}")]
    Eval { iteration: usize, role: Role, source: EvalError },
    #[error("iteration {iteration}, {role:?} network: scoring failed: {source}")]
    Scores { iteration: usize, role: Role, source: ImportanceError },
    #[error("resume ledger does not match this config at record {0}")]
    ResumeMismatch(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl SearchError {
    pub fn kind(&self) -> &'static str {
        match self {
            SearchError::Config(_) => "config",
            SearchError::Arch(_) => "architecture",
            SearchError::Eval { source, .. } => source.kind(),
            SearchError::Scores { .. } => "scores",
            SearchError::ResumeMismatch(_) => "resume_mismatch",
            SearchError::Checkpoint(_) => "checkpoint",
        }
    }
}

/// The ledger up to the failure point, with the reason the search stopped.
#[derive(Debug)]
pub struct SearchFailure {
    pub ledger: SearchLedger,
    pub error: SearchError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Number of iterations `n`.
    pub iterations: usize,
    /// Growth step; defaults to 2 for residual modules and 1 for cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    /// Initial modules per stage.
    pub m0: usize,
    pub widths: Vec<usize>,
    pub kind: ModuleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem_channels: Option<usize>,
    pub num_classes: usize,
    pub input_side: usize,
    #[serde(default)]
    pub criterion: Criterion,
    pub budget: EvalBudget,
    #[serde(default)]
    pub scoring: ScoreOptions,
}

impl SearchConfig {
    /// Low-resolution residual defaults: three stages of widths 16/32/64 on
    /// 32×32 inputs, six modules each, PLS scoring.
    pub fn residual_default(iterations: usize, seed: u64) -> Self {
        SearchConfig {
            iterations,
            delta: None,
            m0: 6,
            widths: vec![16, 32, 64],
            kind: ModuleKind::ResidualBasic,
            stem_channels: None,
            num_classes: 10,
            input_side: 32,
            criterion: Criterion::default(),
            budget: EvalBudget::scratch(1, seed),
            scoring: ScoreOptions { seed, ..ScoreOptions::default() },
        }
    }

    pub fn growth_step(&self) -> usize {
        self.delta.unwrap_or_else(|| self.kind.default_growth_step())
    }

    pub fn stage_count(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.iterations == 0 {
            return Err(SearchError::Config("iterations must be at least 1".into()));
        }
        if self.growth_step() == 0 {
            return Err(SearchError::Config("delta must be at least 1".into()));
        }
        if self.m0 == 0 {
            return Err(SearchError::Config("m0 must be at least 1".into()));
        }
        self.budget.validate().map_err(|e| SearchError::Config(e.to_string()))?;
        self.initial().map(|_| ())
    }

    pub fn initial(&self) -> Result<Architecture, SearchError> {
        let uniform = Architecture::build_uniform(
            self.stage_count(),
            self.m0,
            self.kind.clone(),
            &self.widths,
            self.input_side,
            self.num_classes,
        )?;
        Ok(match self.stem_channels {
            Some(stem) => Architecture::build(
                &uniform.modules(),
                self.kind.clone(),
                &self.widths,
                stem,
                self.input_side,
                self.num_classes,
            )?,
            None => uniform,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Initial,
    Temporary,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub iteration: usize,
    pub role: Role,
    pub arch_id: String,
    pub architecture: Architecture,
    pub scores: StageScores,
    #[serde(default)]
    pub metrics: Metrics,
    /// True when the scores came from an earlier evaluation of the same descriptor.
    pub cache_hit: bool,
    /// For candidates: which stages were deepened this iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_mask: Option<Vec<bool>>,
    /// Where the evaluator left its artifacts (trained weights, logs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchLedger {
    pub records: Vec<LedgerRecord>,
}

impl SearchLedger {
    pub fn candidates(&self) -> impl Iterator<Item = &LedgerRecord> {
        self.records.iter().filter(|r| r.role == Role::Candidate)
    }

    /// The last candidate, or the initial network when no iteration finished.
    pub fn final_architecture(&self) -> Option<&Architecture> {
        self.candidates()
            .last()
            .or_else(|| self.records.iter().find(|r| r.role == Role::Initial))
            .map(|r| &r.architecture)
    }

    /// Number of distinct descriptors the evaluator actually ran on.
    pub fn distinct_evaluations(&self) -> usize {
        let mut ids: Vec<&str> = self.records.iter().filter(|r| !r.cache_hit).map(|r| r.arch_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn evaluator_calls(&self) -> usize {
        self.records.iter().filter(|r| !r.cache_hit).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serialization cannot fail")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

/// `mask_i = α_T,i > α_A,i`; ties keep the stage shallow.
pub fn compare_stage_scores(a: &StageScores, t: &StageScores) -> Result<Vec<bool>, ImportanceError> {
    if a.criterion != t.criterion {
        return Err(ImportanceError::CriterionMismatch(a.criterion, t.criterion));
    }
    if a.alpha.len() != t.alpha.len() {
        return Err(ImportanceError::LengthMismatch(a.alpha.len(), t.alpha.len()));
    }
    Ok(a.alpha.iter().zip(&t.alpha).map(|(a, t)| t > a).collect())
}

type Checkpoint<'a> = dyn FnMut(&SearchLedger) -> Result<(), String> + 'a;

/// Optional behaviors of a search run.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// A ledger from an interrupted run of the same config; its records are
    /// replayed without calling the evaluator.
    pub resume: Option<SearchLedger>,
    /// Called after every ledger record.
    pub checkpoint: Option<Box<Checkpoint<'a>>>,
}

struct Run<'a, 'e, E: Evaluator + ?Sized> {
    cfg: &'a SearchConfig,
    evaluator: &'e E,
    cache: HashMap<String, (StageScores, Metrics, Option<String>)>,
    replay: VecDeque<LedgerRecord>,
    replayed: usize,
    ledger: SearchLedger,
    checkpoint: Option<Box<Checkpoint<'a>>>,
}

impl<E: Evaluator + ?Sized> Run<'_, '_, E> {
    fn record(&mut self, record: LedgerRecord) -> Result<StageScores, SearchError> {
        let scores = record.scores.clone();
        self.ledger.records.push(record);
        if let Some(cp) = self.checkpoint.as_mut() {
            cp(&self.ledger).map_err(SearchError::Checkpoint)?;
        }
        Ok(scores)
    }

    fn score(
        &mut self,
        arch: &Architecture,
        iteration: usize,
        role: Role,
        update_mask: Option<Vec<bool>>,
    ) -> Result<StageScores, SearchError> {
        let key = self.cfg.budget.cache_key(arch);

        if let Some(prior) = self.replay.pop_front() {
            if prior.iteration != iteration || prior.role != role || prior.arch_id != arch.id() {
                return Err(SearchError::ResumeMismatch(self.replayed));
            }
            self.replayed += 1;
            self.cache
                .entry(key)
                .or_insert_with(|| (prior.scores.clone(), prior.metrics.clone(), prior.artifacts.clone()));
            return self.record(prior);
        }

        let (scores, metrics, artifacts, cache_hit) = match self.cache.get(&key) {
            Some((s, m, a)) => (s.clone(), m.clone(), a.clone(), true),
            None => {
                let evaluation = self
                    .evaluator
                    .evaluate(arch, &self.cfg.budget)
                    .and_then(|e| check_layout(arch, &e.features).map(|_| e))
                    .map_err(|source| SearchError::Eval { iteration, role, source })?;
                let scores = stage_scores(&evaluation.features, &self.cfg.criterion, self.cfg.scoring)
                    .map_err(|source| SearchError::Scores { iteration, role, source })?;
                self.cache.insert(
                    key,
                    (scores.clone(), evaluation.metrics.clone(), evaluation.artifacts.clone()),
                );
                (scores, evaluation.metrics, evaluation.artifacts, false)
            }
        };
        self.record(LedgerRecord {
            iteration,
            role,
            arch_id: arch.id().to_string(),
            architecture: arch.clone(),
            scores,
            metrics,
            cache_hit,
            update_mask,
            artifacts,
        })
    }

    fn execute(&mut self) -> Result<(), SearchError> {
        self.cfg.validate()?;
        let delta = self.cfg.growth_step();
        let s = self.cfg.stage_count();

        let mut current = self.cfg.initial()?;
        let mut current_scores = self.score(&current, 0, Role::Initial, None)?;
        for k in 1..=self.cfg.iterations {
            let temporary = current.deepen(&vec![delta; s])?;
            let temporary_scores = self.score(&temporary, k, Role::Temporary, None)?;
            let mask = compare_stage_scores(&current_scores, &temporary_scores)
                .map_err(|source| SearchError::Scores { iteration: k, role: Role::Temporary, source })?;
            let deltas: Vec<usize> = mask.iter().map(|&grow| if grow { delta } else { 0 }).collect();
            let candidate = current.deepen(&deltas)?;
            current_scores = self.score(&candidate, k, Role::Candidate, Some(mask))?;
            current = candidate;
        }
        if !self.replay.is_empty() {
            return Err(SearchError::ResumeMismatch(self.replayed));
        }
        Ok(())
    }
}

/// Runs the search with default options.
pub fn run_search<E: Evaluator + ?Sized>(cfg: &SearchConfig, evaluator: &E) -> Result<SearchLedger, SearchFailure> {
    run_search_with(cfg, evaluator, RunOptions::default())
}

pub fn run_search_with<'a, E: Evaluator + ?Sized>(
    cfg: &'a SearchConfig,
    evaluator: &E,
    options: RunOptions<'a>,
) -> Result<SearchLedger, SearchFailure> {
    let mut run = Run {
        cfg,
        evaluator,
        cache: HashMap::new(),
        replay: options.resume.map(|l| l.records.into()).unwrap_or_default(),
        replayed: 0,
        ledger: SearchLedger::default(),
        checkpoint: options.checkpoint,
    };
    match run.execute() {
        Ok(()) => Ok(run.ledger),
        Err(error) => Err(SearchFailure { ledger: run.ledger, error }),
    }
}
