use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use swnas::arch::{Architecture, ModuleKind};
use swnas::eval::bundle::write_bundle;
use swnas::eval::{synthetic_evaluate, PlantedProfile};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn swnas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swnas")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_error(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim_end()).expect("stderr is one JSON line")
}

#[test]
fn cost_of_resnet56() {
    let report = stdout_json(&swnas(&["cost", "--arch", fixture("resnet56.json").to_str().unwrap()]));
    assert_eq!(report["depth"], 56);
    let params = report["params"].as_f64().unwrap();
    assert!((params - 0.86e6).abs() / 0.86e6 <= 0.02, "{params}");
    assert_eq!(report["modules"], serde_json::json!([9, 9, 9]));
    assert!(report.get("carbon_kg").is_none());
}

#[test]
fn cost_with_emissions() {
    let report = stdout_json(&swnas(&[
        "cost",
        "--arch",
        fixture("resnet110.json").to_str().unwrap(),
        "--runtime-hours",
        "36",
        "--device-power-kw",
        "0.25",
        "--grid-intensity",
        "0.25",
    ]));
    assert_eq!(report["depth"], 110);
    assert_eq!(report["carbon_kg"], 2.25);
}

#[test]
fn partial_emissions_flags_are_a_usage_error() {
    let out = swnas(&["cost", "--arch", fixture("resnet56.json").to_str().unwrap(), "--runtime-hours", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn emissions_subcommand() {
    let v = stdout_json(&swnas(&[
        "emissions",
        "--runtime-hours",
        "36",
        "--device-power-kw",
        "0.25",
        "--grid-intensity",
        "0.25",
        "--pue",
        "1",
    ]));
    assert_eq!(v["kg_co2eq"], 2.25);
    let bad = swnas(&["emissions", "--runtime-hours", "36", "--device-power-kw", "0.25", "--grid-intensity", "0.25", "--pue", "0.5"]);
    assert_eq!(stderr_error(&bad)["error"], "emissions");
}

#[test]
fn plan_transfer_writes_plan_or_rejects_deeper_candidates() {
    let tmp = tempfile::tempdir().unwrap();
    let plan_path = tmp.path().join("plan.json");
    let out = swnas(&[
        "plan-transfer",
        "--candidate",
        fixture("resnet38.json").to_str().unwrap(),
        "--donor",
        fixture("resnet110.json").to_str().unwrap(),
        "--out",
        plan_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let plan: Value = serde_json::from_slice(&fs::read(&plan_path).unwrap()).unwrap();
    assert_eq!(plan["coverage"], 1.0);
    assert_eq!(plan["entries"].as_array().unwrap().len(), 22);

    let rejected = swnas(&[
        "plan-transfer",
        "--candidate",
        fixture("resnet110.json").to_str().unwrap(),
        "--donor",
        fixture("resnet56.json").to_str().unwrap(),
    ]);
    assert_eq!(stderr_error(&rejected)["error"], "stage_depth_exceeds_donor");
}

#[test]
fn search_writes_ledger_and_candidates() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let config = fixture("planted_search.json");
    let summary = stdout_json(&swnas(&[
        "search",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(summary["final_modules"], serde_json::json!([6, 16, 6]));
    assert!(summary["distinct_evaluations"].as_u64().unwrap() <= 11);
    assert_eq!(summary["cost"]["carbon_kg"], 2.25);

    let ledger: Value = serde_json::from_slice(&fs::read(out_dir.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["records"].as_array().unwrap().len(), 11);
    for k in 1..=5 {
        let c = Architecture::deserialize(&fs::read(out_dir.join(format!("candidate_{k}.json"))).unwrap()).unwrap();
        assert_eq!(c.modules(), vec![6, 6 + 2 * k, 6]);
    }
    let last = Architecture::deserialize(&fs::read(out_dir.join("final.json")).unwrap()).unwrap();
    assert_eq!(last.modules(), vec![6, 16, 6]);
}

#[test]
fn search_is_reproducible_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture("planted_search.json");
    let run = |dir: &Path, extra: &[&str]| {
        let mut args = vec!["--seed", "3", "search", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        stdout_json(&swnas(&args))
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&a, &[]);
    run(&b, &[]);
    let ledger_a = fs::read(a.join("ledger.json")).unwrap();
    assert_eq!(ledger_a, fs::read(b.join("ledger.json")).unwrap());

    // Drop the last records and resume.
    let mut partial: Value = serde_json::from_slice(&ledger_a).unwrap();
    partial["records"].as_array_mut().unwrap().truncate(4);
    fs::write(b.join("ledger.json"), serde_json::to_vec(&partial).unwrap()).unwrap();
    run(&b, &["--resume"]);
    assert_eq!(ledger_a, fs::read(b.join("ledger.json")).unwrap());
}

#[test]
fn missing_config_is_a_usage_error_with_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("never");
    let out = swnas(&["search", "--config", "/nonexistent/config.json", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_config_keys_are_rejected_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config: Value = serde_json::from_slice(&fs::read(fixture("planted_search.json")).unwrap()).unwrap();
    config["surprise"] = Value::from(1);
    let path = tmp.path().join("config.json");
    fs::write(&path, serde_json::to_vec(&config).unwrap()).unwrap();
    let out_dir = tmp.path().join("run");
    let out = swnas(&["search", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(stderr_error(&out)["error"], "config");
    assert!(!out_dir.exists());
}

#[test]
fn bridge_without_section_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = swnas(&[
        "search",
        "--config",
        fixture("planted_search.json").to_str().unwrap(),
        "--evaluator",
        "bridge",
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(stderr_error(&out)["error"], "config");
}

#[test]
fn failing_trainer_keeps_the_ledger_and_reports_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config: Value = serde_json::from_slice(&fs::read(fixture("planted_search.json")).unwrap()).unwrap();
    config["evaluator"] = "bridge".into();
    config["bridge"] = serde_json::json!({
        "command": ["sh", "-c", "echo boom >&2; exit 7", "trainer"],
        "workdir": tmp.path().join("work"),
        "timeout_secs": 30.0
    });
    let path = tmp.path().join("config.json");
    fs::write(&path, serde_json::to_vec(&config).unwrap()).unwrap();
    let out_dir = tmp.path().join("run");
    let out = swnas(&["search", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    let err = stderr_error(&out);
    assert_eq!(err["error"], "trainer_exit");
    assert!(err["message"].as_str().unwrap().contains("boom"));
    let ledger: Value = serde_json::from_slice(&fs::read(out_dir.join("ledger.json")).unwrap()).unwrap();
    assert!(ledger["records"].as_array().unwrap().is_empty());
}

fn planted_bundle(dir: &Path) {
    let a = Architecture::build(&[2, 2, 2], ModuleKind::ResidualBasic, &[16, 32, 64], 16, 32, 10).unwrap();
    let features = synthetic_evaluate(&a, &PlantedProfile::single_informative(3, 2, 4, 1.0, 1)).unwrap();
    write_bundle(dir, &features, 2).unwrap();
}

#[test]
fn score_prints_stage_scores_with_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    planted_bundle(tmp.path());
    let bundle = tmp.path().to_str().unwrap();

    let pls = stdout_json(&swnas(&["score", "--bundle", bundle]));
    assert_eq!(pls["criterion"]["criterion"], "pls");
    assert_eq!(pls["criterion"]["components"], 2);
    let alpha: Vec<f64> = serde_json::from_value(pls["alpha"].clone()).unwrap();
    assert_eq!(alpha.len(), 3);
    assert!(alpha[2] > alpha[0] && alpha[2] > alpha[1], "{alpha:?}");

    let ilfs = stdout_json(&swnas(&["score", "--bundle", bundle, "--criterion", "ilfs", "--tokens", "8"]));
    assert_eq!(ilfs["criterion"]["criterion"], "ilfs_surrogate");
    assert_eq!(ilfs["criterion"]["tokens"], 8);
    assert_eq!(ilfs["surrogate"], true);

    let inffs = stdout_json(&swnas(&["score", "--bundle", bundle, "--criterion", "inffs", "--beta", "0.5"]));
    assert_eq!(inffs["criterion"]["beta"], 0.5);
    assert_eq!(swnas(&["score", "--bundle", bundle]).stdout, swnas(&["score", "--bundle", bundle]).stdout);
}

#[test]
fn score_rejects_corrupt_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    planted_bundle(tmp.path());
    let stage = tmp.path().join("stage_1.swsf");
    let bytes = fs::read(&stage).unwrap();
    fs::write(&stage, &bytes[..bytes.len() - 3]).unwrap();
    let out = swnas(&["score", "--bundle", tmp.path().to_str().unwrap()]);
    assert_eq!(stderr_error(&out)["error"], "bundle");

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(swnas(&["score", "--bundle", empty.path().to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn help_and_version() {
    for sub in ["search", "score", "cost", "plan-transfer", "emissions"] {
        let out = swnas(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
    }
    let version = String::from_utf8(swnas(&["--version"]).stdout).unwrap();
    assert!(version.contains("(build "), "{version}");
    assert_eq!(swnas(&["frobnicate"]).status.code(), Some(2));
}
