use std::fs;
use std::path::Path;

use seqdml::cli::{
    run, strip_timestamp, Command, RunConfig, BALANCE_FILE, EFFECTS_FILE, REPORT_FILE, TRIM_FILE,
};
use seqdml::Error;

fn simulate(dir: &Path) {
    let cfg = RunConfig::from_toml(&format!(
        r#"
        seed = 5
        output_dir = "{}"

        [simulate]
        family = "enumerable"
        preset = "calibrated"
        n = 2000
        "#,
        dir.join("sim").display()
    ))
    .unwrap();
    run(&cfg, Command::Simulate).unwrap();
}

fn estimate_config(dir: &Path, out: &str, extra: &str) -> RunConfig {
    let text = format!(
        r#"
        seed = 7
        output_dir = "{out}"
        {extra}

        [input]
        path = "{csv}"

        [input.schema]
        x0 = ["atom_1", "atom_2", "atom_3"]
        d1 = "d1"
        x1 = ["v1", "w"]
        d2 = "d2"
        y = "y"
        y1_col = "v1"
        z0 = "z0"

        [estimation]
        learners = "parametric"
        folds = 3

        [[policies]]
        name = "dyn"
        kind = "dynamic"
        d1 = 1
        d2_if_v1_zero = 0
        d2_if_v1_one = 1

        [[policies]]
        name = "base"
        kind = "static"
        d1 = 0
        d2 = 1
        "#,
        out = dir.join(out).display(),
        csv = dir.join("sim/simulated.csv").display(),
    );
    RunConfig::from_toml(&text).unwrap()
}

fn report(cfg: &RunConfig) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(cfg.output_dir.join(REPORT_FILE)).unwrap()).unwrap()
}

#[test]
fn estimate_reports_values_contrast_and_groups() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let cfg = estimate_config(dir.path(), "est", "");
    let out = run(&cfg, Command::Estimate).unwrap();
    assert!(out.files.iter().any(|f| f.ends_with(EFFECTS_FILE)));
    assert!(cfg.output_dir.join(TRIM_FILE).is_file());
    assert!(cfg.output_dir.join(BALANCE_FILE).is_file());

    let rep = report(&cfg);
    let effects = rep["effects"].as_array().unwrap();
    let count = |kind: &str| effects.iter().filter(|e| e["kind"] == kind).count();
    assert_eq!(count("apo"), 2);
    assert_eq!(count("ate"), 1);
    assert_eq!(count("gate"), 2);
    assert!(effects.iter().all(|e| e["baseline"] == false));
    assert_eq!(rep["meta"]["input"], "simulated.csv");
    assert_eq!(rep["meta"]["n_input"], 2000);
}

#[test]
fn ipw_results_carry_the_baseline_flag() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let mut cfg = estimate_config(dir.path(), "ipw", "");
    cfg.estimation.method = seqdml::pipeline::EstimatorKind::Ipw;
    run(&cfg, Command::Estimate).unwrap();
    let rep = report(&cfg);
    assert!(rep["effects"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["baseline"] == true));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let one = estimate_config(dir.path(), "w1", "workers = 1");
    let three = estimate_config(dir.path(), "w3", "workers = 3");
    run(&one, Command::Estimate).unwrap();
    run(&three, Command::Estimate).unwrap();
    let a =
        strip_timestamp(&fs::read_to_string(one.output_dir.join(REPORT_FILE)).unwrap()).unwrap();
    let b =
        strip_timestamp(&fs::read_to_string(three.output_dir.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trim_report_writes_overlap_only() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let cfg = estimate_config(dir.path(), "trim", "");
    run(&cfg, Command::TrimReport).unwrap();
    assert!(cfg.output_dir.join(TRIM_FILE).is_file());
    assert!(!cfg.output_dir.join(REPORT_FILE).exists());
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.output_dir.join(TRIM_FILE)).unwrap()).unwrap();
    assert_eq!(v["overlap"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_keys_and_missing_input_are_config_errors() {
    assert!(matches!(
        RunConfig::from_toml("sede = 3"),
        Err(Error::Toml(_)) | Err(Error::Config(_))
    ));
    let dir = tempfile::tempdir().unwrap();
    let cfg = estimate_config(dir.path(), "none", "");
    assert!(matches!(
        run(&cfg, Command::Estimate),
        Err(Error::Config(_))
    ));
}

#[test]
fn policy_outside_the_label_set_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let mut cfg = estimate_config(dir.path(), "bad", "");
    cfg.policies[1].d2 = Some(seqdml::cli::TreatmentRef::Id(4));
    assert!(run(&cfg, Command::Estimate).is_err());
}
