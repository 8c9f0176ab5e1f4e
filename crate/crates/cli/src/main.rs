//! `swnas`: stage-wise depth search from the command line.
//!
//! Exit status is 0 on success, 1 on domain errors (reported as one JSON
//! line on stderr) and 2 on usage errors.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use swnas::arch::Architecture;
use swnas::cost::{cost_report, emissions, CostProfiles, EmissionsInput};
use swnas::eval::bundle::read_bundle;
use swnas::eval::{BridgeEvaluator, Evaluator, SyntheticEvaluator};
use swnas::importance::{stage_scores, Criterion, ScoreOptions, DEFAULT_SAMPLE_CAP};
use swnas::search::{run_search_with, Role, RunOptions, SearchLedger};
use swnas::transfer::plan_transfer;

use config::{EvaluatorChoice, RunConfig};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (build ", env!("SWNAS_BUILD_ID"), ")");
const LEDGER_FILE: &str = "ledger.json";

#[derive(Parser)]
#[command(name = "swnas", version = VERSION, about = "Stage-wise depth search for convolutional networks")]
struct Cli {
    /// Seed for every random choice; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the search and write the ledger and candidate descriptors.
    Search(SearchArgs),
    /// Score the stages of a feature bundle.
    Score(ScoreArgs),
    /// Depth, parameters, FLOPs, memory and optional emissions of a descriptor.
    Cost(CostArgs),
    /// Map a donor network's components onto a shallower candidate.
    PlanTransfer(PlanArgs),
    /// Training emissions in kgCO2eq.
    Emissions(EmissionsArgs),
}

#[derive(Args)]
struct SearchArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the evaluator named in the config.
    #[arg(long, value_enum)]
    evaluator: Option<EvaluatorChoice>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from the ledger already in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Pls,
    Inffs,
    Ilfs,
}

#[derive(Args)]
struct ScoreArgs {
    /// Bundle directory containing bundle.json.
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "pls")]
    criterion: CriterionArg,
    /// PLS components.
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// inf-FS mix between dispersion and decorrelation.
    #[arg(long, default_value_t = 0.5)]
    alpha_mix: f64,
    /// Path-energy discount for inf-FS and il-FS.
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    /// il-FS quantization tokens.
    #[arg(long, default_value_t = 4)]
    tokens: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
    sample_cap: usize,
}

#[derive(Args)]
struct EmissionsFlags {
    #[arg(long)]
    runtime_hours: Option<f64>,
    #[arg(long)]
    device_power_kw: Option<f64>,
    /// kgCO2eq per kWh.
    #[arg(long)]
    grid_intensity: Option<f64>,
    #[arg(long)]
    pue: Option<f64>,
}

#[derive(Args)]
struct CostArgs {
    /// Architecture descriptor (JSON).
    #[arg(long)]
    arch: PathBuf,
    /// Cost profiles for cell modules (JSON).
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[command(flatten)]
    emissions: EmissionsFlags,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long)]
    donor: PathBuf,
    /// Write the plan here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmissionsArgs {
    #[command(flatten)]
    emissions: EmissionsFlags,
}

enum Failure {
    Usage(String),
    Domain { kind: String, message: String },
}

impl Failure {
    fn domain(kind: &str, message: impl ToString) -> Self {
        Failure::Domain { kind: kind.to_string(), message: message.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| Failure::domain("io", format!("{}: {e}", path.display())))
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn load_arch(path: &Path) -> Result<Architecture, Failure> {
    Architecture::deserialize(&read_input(path)?).map_err(|e| Failure::domain("architecture", e))
}

impl EmissionsFlags {
    fn resolve(&self) -> Result<Option<EmissionsInput>, Failure> {
        match (self.runtime_hours, self.device_power_kw, self.grid_intensity) {
            (None, None, None) if self.pue.is_none() => Ok(None),
            (Some(runtime_hours), Some(device_power_kw), Some(grid_intensity)) => Ok(Some(EmissionsInput {
                runtime_hours,
                device_power_kw,
                grid_intensity,
                pue: self.pue.unwrap_or(1.0),
            })),
            _ => Err(Failure::Usage(
                "emissions need --runtime-hours, --device-power-kw and --grid-intensity together".into(),
            )),
        }
    }
}

fn cmd_search(args: SearchArgs, seed: Option<u64>) -> CmdResult {
    let bytes = read_input(&args.config)?;
    let mut cfg: RunConfig = serde_json::from_slice(&bytes).map_err(|e| Failure::domain("config", e))?;
    if let Some(choice) = args.evaluator {
        cfg.evaluator = choice;
    }
    if let Some(seed) = seed {
        cfg.apply_seed(seed);
    }
    cfg.validate().map_err(|e| Failure::domain("config", e))?;
    let out = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Failure::Usage("no output directory: pass --out or set out_dir".into()))?;

    let resume = if args.resume {
        let ledger = SearchLedger::from_json(&read_input(&out.join(LEDGER_FILE))?)
            .map_err(|e| Failure::domain("ledger", e))?;
        Some(ledger)
    } else {
        None
    };
    fs::create_dir_all(&out).map_err(|e| Failure::domain("io", format!("{}: {e}", out.display())))?;

    let evaluator: Box<dyn Evaluator> = match cfg.evaluator {
        EvaluatorChoice::Synthetic => Box::new(SyntheticEvaluator::new(cfg.synthetic.clone().expect("validated"))),
        EvaluatorChoice::Bridge => Box::new(BridgeEvaluator::new(cfg.bridge.clone().expect("validated"))),
    };

    let checkpoint_dir = out.clone();
    let checkpoint = move |ledger: &SearchLedger| -> Result<(), String> {
        let fail = |f: Failure| match f {
            Failure::Usage(m) | Failure::Domain { message: m, .. } => m,
        };
        write_atomic(&checkpoint_dir.join(LEDGER_FILE), ledger.to_json().as_bytes()).map_err(fail)?;
        if let Some(last) = ledger.records.last().filter(|r| r.role == Role::Candidate) {
            let path = checkpoint_dir.join(format!("candidate_{}.json", last.iteration));
            write_atomic(&path, last.architecture.to_json_pretty().as_bytes()).map_err(fail)?;
        }
        Ok(())
    };
    let ledger = run_search_with(
        &cfg.search,
        evaluator.as_ref(),
        RunOptions { resume, checkpoint: Some(Box::new(checkpoint)) },
    )
    .map_err(|failure| {
        // The checkpoint already holds every record before the failure.
        let _ = write_atomic(&out.join(LEDGER_FILE), failure.ledger.to_json().as_bytes());
        Failure::domain(failure.error.kind(), failure.error)
    })?;

    let last = ledger.final_architecture().expect("a finished search has records");
    write_atomic(&out.join("final.json"), last.to_json_pretty().as_bytes())?;
    let cost = cost_report(last, &CostProfiles::default(), cfg.emissions.as_ref()).ok();
    let summary = json!({
        "final_modules": last.modules(),
        "final_id": last.id(),
        "iterations": cfg.search.iterations,
        "distinct_evaluations": ledger.distinct_evaluations(),
        "evaluator_calls": ledger.evaluator_calls(),
        "criterion": cfg.search.criterion,
        "cost": cost,
    });
    let text = serde_json::to_string_pretty(&summary).expect("json value serializes");
    write_atomic(&out.join("summary.json"), text.as_bytes())?;
    println!("{text}");
    Ok(())
}

fn cmd_score(args: ScoreArgs, seed: Option<u64>) -> CmdResult {
    if !args.bundle.join(swnas::eval::bundle::MANIFEST_FILE).is_file() {
        return Err(Failure::Usage(format!("{} has no bundle manifest", args.bundle.display())));
    }
    let (features, _) = read_bundle(&args.bundle).map_err(|e| Failure::domain("bundle", e))?;
    let criterion = match args.criterion {
        CriterionArg::Pls => Criterion::Pls { components: args.components },
        CriterionArg::Inffs => Criterion::InfFs { alpha_mix: args.alpha_mix, beta: args.beta },
        CriterionArg::Ilfs => Criterion::IlFs { tokens: args.tokens, beta: args.beta },
    };
    let options = ScoreOptions { sample_cap: args.sample_cap, seed: seed.unwrap_or(0) };
    let scores = stage_scores(&features, &criterion, options).map_err(|e| Failure::domain("scores", e))?;
    print_json(&json!({
        "criterion": criterion,
        "surrogate": criterion.is_surrogate(),
        "scoring": options,
        "samples": features.rows(),
        "layout": features.layout(),
        "alpha": scores.alpha,
    }));
    Ok(())
}

fn cmd_cost(args: CostArgs) -> CmdResult {
    let emissions_input = args.emissions.resolve()?;
    let a = load_arch(&args.arch)?;
    let profiles = match &args.profiles {
        Some(p) => CostProfiles::from_json(&read_input(p)?).map_err(|e| Failure::domain("profiles", e))?,
        None => CostProfiles::default(),
    };
    let report = cost_report(&a, &profiles, emissions_input.as_ref()).map_err(|e| Failure::domain("cost", e))?;
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["arch_id"] = json!(a.id());
    value["modules"] = json!(a.modules());
    print_json(&value);
    Ok(())
}

fn cmd_plan_transfer(args: PlanArgs) -> CmdResult {
    let candidate = load_arch(&args.candidate)?;
    let donor = load_arch(&args.donor)?;
    let plan = plan_transfer(&candidate, &donor).map_err(|e| {
        let kind = match e {
            swnas::transfer::TransferError::StageDepthExceedsDonor { .. } => "stage_depth_exceeds_donor",
            swnas::transfer::TransferError::ShapeMismatch(_) => "shape_mismatch",
        };
        Failure::domain(kind, e)
    })?;
    match args.out {
        Some(path) => write_atomic(&path, plan.to_json().as_bytes()),
        None => {
            println!("{}", plan.to_json());
            Ok(())
        }
    }
}

fn cmd_emissions(args: EmissionsArgs) -> CmdResult {
    let input = args
        .emissions
        .resolve()?
        .ok_or_else(|| Failure::Usage("pass --runtime-hours, --device-power-kw and --grid-intensity".into()))?;
    let kg = emissions(&input).map_err(|e| Failure::domain("emissions", e))?;
    print_json(&json!({ "kg_co2eq": kg, "input": input }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search(a) => cmd_search(a, cli.seed),
        Command::Score(a) => cmd_score(a, cli.seed),
        Command::Cost(a) => cmd_cost(a),
        Command::PlanTransfer(a) => cmd_plan_transfer(a),
        Command::Emissions(a) => cmd_emissions(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Domain { kind, message }) => {
            eprintln!("{}", json!({ "error": kind, "message": message }));
            ExitCode::from(1)
        }
    }
}
