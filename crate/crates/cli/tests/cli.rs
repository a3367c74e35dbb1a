//! End-to-end checks of the command-line surface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stackplan(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stackplan"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_stable_pair_scene(dir: &Path) -> String {
    let path = dir.join("scene.json");
    fs::write(
        &path,
        r#"{"objects":[{"id":0,"category":"bowl"},{"id":1,"category":"spoon"}],
            "edges":[{"parent":0,"child":1,"kind":"stable"}]}"#,
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn generate_writes_corpus_and_zero_count_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = stackplan(
        &["generate", "--count", "4", "--out", "corpus", "--seed", "9"],
        dir.path(),
    );
    assert!(out.status.success());
    let manifest = fs::read_to_string(dir.path().join("corpus/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["scenes"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("corpus/scene_000000.json").exists());

    let out = stackplan(
        &["generate", "--count", "0", "--out", "empty", "--seed", "9"],
        dir.path(),
    );
    assert!(out.status.success(), "count 0 exits 0");
    let manifest = fs::read_to_string(dir.path().join("empty/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["scenes"].as_array().unwrap().len(), 0);
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = stackplan(
            &["generate", "--count", "2", "--out", name, "--seed", "33"],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let a = fs::read_to_string(dir.path().join("a/scene_000001.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/scene_000001.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn plan_emits_the_expected_chains() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_stable_pair_scene(dir.path());
    // Deterministic grasp model so the value search sees no retries.
    let config_path = dir.path().join("config.json");
    fs::write(
        &config_path,
        r#"{"noise":{"recall":{"bowl":1.0,"spoon":1.0},
             "grasp_success":{"bowl":1.0,"spoon":1.0}}}"#,
    )
    .unwrap();
    let config = config_path.display().to_string();

    let out = stackplan(
        &["plan", "--scene", &scene, "--targets", "0,1", "--config", &config],
        dir.path(),
    );
    assert!(out.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["steps"].as_array().unwrap().len(), 1);
    assert_eq!(plan["steps"][0]["action"], "grasp_to_target");
    assert_eq!(plan["steps"][0]["object"], 0);
    assert_eq!(plan["steps"][0]["moved"], serde_json::json!([0, 1]));
    assert_eq!(plan["steps"][0]["dest"], "target");

    let out = stackplan(
        &[
            "plan", "--scene", &scene, "--targets", "0,1", "--planner", "one_by_one",
            "--config", &config,
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["steps"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_planner_is_a_usage_error_listing_known_ids() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_stable_pair_scene(dir.path());
    let out = stackplan(
        &["plan", "--scene", &scene, "--targets", "0", "--planner", "nosuch"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pomdp") && stderr.contains("one_by_one") && stderr.contains("rule_only"));
}

#[test]
fn invalid_scene_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown category: the profile tables do not cover "widget".
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"objects":[{"id":0,"category":"widget"}],"edges":[]}"#,
    )
    .unwrap();
    let out = stackplan(
        &["plan", "--scene", &path.display().to_string(), "--targets", "0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("widget"), "{stderr}");
}

#[test]
fn evaluate_then_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = stackplan(
        &["generate", "--count", "3", "--out", "corpus", "--seed", "5"],
        dir.path(),
    );
    assert!(out.status.success());
    let out = stackplan(
        &[
            "evaluate", "--corpus", "corpus", "--out", "results", "--seed", "11",
            "--planners", "pomdp,one_by_one", "--tasks", "st,tc",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("results/summary.txt")).unwrap();
    assert!(summary.contains("pomdp") && summary.contains("one_by_one"));
    assert!(dir.path().join("results/chart.svg").exists());
    assert!(dir.path().join("results/aggregate.json").exists());

    let report = stackplan(
        &["report", "--records", "results/episodes.jsonl"],
        dir.path(),
    );
    assert!(report.status.success());
    assert_eq!(String::from_utf8_lossy(&report.stdout), summary);
}

#[test]
fn simulate_writes_a_step_trace() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_stable_pair_scene(dir.path());
    let out = stackplan(
        &[
            "simulate", "--scene", &scene, "--targets", "0,1", "--seed", "4",
            "--trace", "trace.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["task"], "table_clear");
    let trace = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    for line in trace.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["step"].is_number());
        assert!(record["outcome"].is_string());
        assert!(record["observation_digest"].is_string());
    }
}
