use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn msg_dir() -> PathBuf {
    core_fixtures().join("msg")
}

fn fabricdds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fabricdds")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn compile_six_nodes_matches_golden() {
    let out = fabricdds(&["compile", path(&core_fixtures().join("six_nodes.cfg")), "--msg-dir", path(&msg_dir())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(core_fixtures().join("golden/six_nodes.json")).unwrap()).unwrap();
    assert_eq!(stdout_json(&out), golden);
}

#[test]
fn compile_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("graph.json");
    let out = fabricdds(&[
        "compile",
        path(&core_fixtures().join("six_nodes.cfg")),
        "-m",
        path(&msg_dir()),
        "-o",
        path(&target),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(v["topics"].as_array().unwrap().len(), 2);
}

#[test]
fn empty_config_is_empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "# nothing here\n").unwrap();
    let out = fabricdds(&["compile", path(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out), serde_json::json!({ "topics": [] }));
}

#[test]
fn type_mismatch_fails_with_diagnostic() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/type_mismatch.cfg");
    let out = fabricdds(&["compile", path(&cfg), "--msg-dir", path(&msg_dir())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("type-mismatch") && err.contains("status"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn syntax_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "node a\n  pub onlytopic\n").unwrap();
    let out = fabricdds(&["compile", path(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_file_is_an_error() {
    let out = fabricdds(&["compile", "/nonexistent/app.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/app.cfg"));
}

#[test]
fn explain_lists_topics() {
    let out = fabricdds(&["explain", path(&core_fixtures().join("six_nodes.cfg")), "-m", path(&msg_dir())]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("A: arbiter_then_broadcast"));
    assert!(lines[1].starts_with("B: broadcast_only"));
}

fn primitive_width(ty: &str) -> Option<usize> {
    match ty {
        "bool" | "int8" | "uint8" | "byte" | "char" => Some(1),
        "int16" | "uint16" => Some(2),
        "int32" | "uint32" | "float32" => Some(4),
        "int64" | "uint64" | "float64" => Some(8),
        _ => None,
    }
}

/// Depth-first scalar field paths read straight from the fixture files.
fn expand(pkg: &str, name: &str, prefix: &str, out: &mut Vec<(String, String)>) {
    let text = std::fs::read_to_string(msg_dir().join(pkg).join("msg").join(format!("{name}.msg"))).unwrap();
    for line in text.lines().map(|l| l.split('#').next().unwrap().trim()).filter(|l| !l.is_empty()) {
        let (ty, field) = line.split_once(' ').unwrap();
        let path = format!("{prefix}{field}");
        if primitive_width(ty).is_some() || ty == "string" {
            out.push((path, ty.to_owned()));
        } else {
            let (p, n) = ty.split_once('/').unwrap_or((pkg, ty));
            expand(p, n, &format!("{path}."), out);
        }
    }
}

#[test]
fn plan_point_has_three_slots() {
    let out = fabricdds(&["plan", "geometry_msgs/Point", "-m", path(&msg_dir())]);
    assert_eq!(out.status.code(), Some(0));
    let plan = stdout_json(&out);
    let mut oracle = Vec::new();
    expand("geometry_msgs", "Point", "", &mut oracle);
    let width: usize = oracle.iter().map(|(_, ty)| primitive_width(ty).unwrap()).sum();
    assert_eq!(plan["slots"].as_array().unwrap().len(), 3);
    assert_eq!(plan["fixed_size_bytes"].as_u64(), Some(width as u64));
    assert_eq!(plan["type_name"], "geometry_msgs/Point");
}

#[test]
fn plan_nested_is_depth_first() {
    let out = fabricdds(&["plan", "geometry_msgs/Pose", "-m", path(&msg_dir())]);
    assert_eq!(out.status.code(), Some(0));
    let plan = stdout_json(&out);
    let paths: Vec<&str> = plan["slots"].as_array().unwrap().iter().map(|s| s["path"].as_str().unwrap()).collect();
    let mut oracle = Vec::new();
    expand("geometry_msgs", "Pose", "", &mut oracle);
    let expected: Vec<&str> = oracle.iter().map(|(p, _)| p.as_str()).collect();
    assert_eq!(paths, expected);
}

#[test]
fn plan_unknown_type_fails() {
    let out = fabricdds(&["plan", "geometry_msgs/Nope", "-m", path(&msg_dir())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry_msgs/Nope"));
}

#[test]
fn bench_transfer_two_sizes() {
    let out = fabricdds(&["bench", "transfer", "--sizes", "3k,12k", "--reps", "100", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<_> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_owned()).collect();
    assert_eq!(rows, ["3k", "12k"]);
}

#[test]
fn bench_markdown_layout() {
    let out = fabricdds(&["bench", "transfer", "--sizes", "4", "--reps", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("| size | baseline t_avg (σ) [ms] | streaming t_avg (σ) [ms] | speedup |"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bench_single_subject_json() {
    let out = fabricdds(&["bench", "fanout", "--subscribers", "1,3", "--size", "1k", "--reps", "20", "--subject", "streaming", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let configs = v["configs"].as_array().unwrap();
    assert_eq!(configs.len(), 2);
    assert!(configs.iter().all(|c| c["baseline"].is_null() && c["streaming"]["transport"]["n"] == 19));
}

#[test]
fn default_reps_is_one_thousand() {
    let out = fabricdds(&["bench", "transfer", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[default: 1000]"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["bench", "transfer", "--sizes", "3q"][..],
        &["bench", "transfer", "--bogus"],
        &["frobnicate"],
        &[],
        &["bench", "transfer", "--format", "xml"],
    ] {
        let out = fabricdds(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn zero_reps_is_a_failure() {
    let out = fabricdds(&["bench", "transfer", "--sizes", "4", "--reps", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn chain_demo_leaves_baseline_dataflow_empty() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("chain.json");
    let out = fabricdds(&["chain-demo", "--scale", "0.05", "--reps", "5", "--seed", "3", "--format", "json", "-o", path(&target)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    let configs = v["configs"].as_array().unwrap();
    assert_eq!(configs.len(), 2);
    assert_eq!(configs[0]["label"], "sequential");
    assert!(configs[1]["baseline"].is_null());
    assert!(!configs[1]["streaming"].is_null());
}

#[test]
fn chain_demo_baseline_dataflow_alone_is_rejected() {
    let out = fabricdds(&["chain-demo", "--mode", "dataflow", "--subject", "baseline", "--scale", "0.05", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(1));
}
