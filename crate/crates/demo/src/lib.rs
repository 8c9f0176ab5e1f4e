//! Browser demo: cost explorer, planted-signal search and stage scores.
//!
//! Each operation takes a JSON request string and returns a JSON response,
//! so the page needs no bindings beyond strings.

use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

use swnas::arch::{Architecture, ModuleKind};
use swnas::cost::{cost_report, CostProfiles, EmissionsInput};
use swnas::eval::{synthetic_evaluate, PlantedProfile, SyntheticEvaluator};
use swnas::importance::{stage_scores, Criterion, ScoreOptions};
use swnas::search::{run_search, SearchConfig};

const WIDTHS: [usize; 3] = [16, 32, 64];

fn residual(modules: &[usize]) -> Result<Architecture, String> {
    Architecture::build(modules, ModuleKind::ResidualBasic, &WIDTHS, 16, 32, 10).map_err(|e| e.to_string())
}

fn parse<'a, T: Deserialize<'a>>(request: &'a str) -> Result<T, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostRequest {
    pub modules: Vec<usize>,
    #[serde(default)]
    pub emissions: Option<EmissionsInput>,
}

/// Cost of a three-stage residual network on 32×32 inputs.
pub fn cost(request: &str) -> Result<String, String> {
    let req: CostRequest = parse(request)?;
    let a = residual(&req.modules)?;
    let report = cost_report(&a, &CostProfiles::default(), req.emissions.as_ref()).map_err(|e| e.to_string())?;
    Ok(json!({ "modules": a.modules(), "report": report }).to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub iterations: usize,
    #[serde(default = "default_m0")]
    pub m0: usize,
    pub informative_stage: usize,
    pub ceiling: usize,
    pub gain: f64,
    pub seed: u64,
    #[serde(default)]
    pub criterion: Criterion,
}

fn default_m0() -> usize {
    6
}

#[derive(Debug, Serialize)]
struct IterationView {
    iteration: usize,
    temporary_alpha: Vec<f64>,
    candidate: Vec<usize>,
    candidate_alpha: Vec<f64>,
    update_mask: Vec<bool>,
}

/// Runs the search against a planted-signal evaluator.
pub fn planted_search(request: &str) -> Result<String, String> {
    let req: SearchRequest = parse(request)?;
    if req.iterations > 20 {
        return Err("at most 20 iterations in the demo".into());
    }
    if req.informative_stage >= WIDTHS.len() {
        return Err(format!("informative_stage must be below {}", WIDTHS.len()));
    }
    let mut cfg = SearchConfig::residual_default(req.iterations, req.seed);
    cfg.m0 = req.m0;
    cfg.criterion = req.criterion.clone();
    let mut profile = PlantedProfile::single_informative(3, req.informative_stage, req.ceiling, req.gain, req.seed);
    profile.samples = 512;
    let ledger = run_search(&cfg, &SyntheticEvaluator::new(profile)).map_err(|f| f.error.to_string())?;

    let initial = &ledger.records[0];
    let iterations: Vec<IterationView> = (1..=req.iterations)
        .filter_map(|k| {
            let of = |role| ledger.records.iter().find(|r| r.iteration == k && r.role == role);
            let t = of(swnas::search::Role::Temporary)?;
            let c = of(swnas::search::Role::Candidate)?;
            Some(IterationView {
                iteration: k,
                temporary_alpha: t.scores.alpha.clone(),
                candidate: c.architecture.modules(),
                candidate_alpha: c.scores.alpha.clone(),
                update_mask: c.update_mask.clone().unwrap_or_default(),
            })
        })
        .collect();
    let last = ledger.final_architecture().expect("search produced records");
    let report = cost_report(last, &CostProfiles::default(), None).map_err(|e| e.to_string())?;
    Ok(json!({
        "initial": initial.architecture.modules(),
        "initial_alpha": initial.scores.alpha,
        "iterations": iterations,
        "final": last.modules(),
        "distinct_evaluations": ledger.distinct_evaluations(),
        "bound": 2 * req.iterations + 1,
        "final_cost": report,
        "surrogate": req.criterion.is_surrogate(),
    })
    .to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoresRequest {
    pub modules: Vec<usize>,
    pub informative_stage: usize,
    pub ceiling: usize,
    pub gain: f64,
    pub seed: u64,
    #[serde(default)]
    pub criterion: Criterion,
}

/// Stage scores of one planted network under each criterion request.
pub fn scores(request: &str) -> Result<String, String> {
    let req: ScoresRequest = parse(request)?;
    if req.informative_stage >= WIDTHS.len() {
        return Err(format!("informative_stage must be below {}", WIDTHS.len()));
    }
    let a = residual(&req.modules)?;
    let mut profile = PlantedProfile::single_informative(3, req.informative_stage, req.ceiling, req.gain, req.seed);
    profile.samples = 512;
    let features = synthetic_evaluate(&a, &profile).map_err(|e| e.to_string())?;
    let options = ScoreOptions { seed: req.seed, ..ScoreOptions::default() };
    let s = stage_scores(&features, &req.criterion, options).map_err(|e| e.to_string())?;
    Ok(json!({
        "modules": a.modules(),
        "criterion": req.criterion,
        "surrogate": req.criterion.is_surrogate(),
        "alpha": s.alpha,
        "strength": (0..3).map(|i| profile.strength(i, a.modules()[i])).collect::<Vec<_>>(),
    })
    .to_string())
}

#[wasm_bindgen(js_name = costReport)]
pub fn cost_js(request: &str) -> Result<String, JsValue> {
    cost(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = plantedSearch)]
pub fn planted_search_js(request: &str) -> Result<String, JsValue> {
    planted_search(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = stageScores)]
pub fn scores_js(request: &str) -> Result<String, JsValue> {
    scores(request).map_err(|e| JsValue::from_str(&e))
}
