use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str, file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .join(file)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn verify_balance_on_path_with_loop() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify-balance",
        "--graph",
        &fixture("ex3", "graph.json"),
        "--mu",
        &fixture("ex3", "mu.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(dir.path());
    assert!(s["max_residual"].as_f64().unwrap() < 1e-12);
    assert_eq!(s["passed"], true);
}

#[test]
fn ncond_on_bipartite_path_reports_empty_region() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("path.json");
    std::fs::write(
        &graph,
        r#"{"nodes":["a","b","c","d"],"edges":[["a","b"],["b","c"],["c","d"]],"self_loops":[]}"#,
    )
    .unwrap();
    let out = run(&[
        "ncond",
        "--graph",
        graph.to_str().unwrap(),
        "--mu",
        "uniform",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(s["region"], "empty");
    assert_eq!(
        s["bipartition"],
        serde_json::json!([["a", "c"], ["b", "d"]])
    );
    assert_eq!(s["measure"]["satisfied"], false);
}

#[test]
fn ncond_flags_measure_outside_region() {
    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.json");
    std::fs::write(&mu, r#"{"1":"0.35","2":"0.25","3":"0.4"}"#).unwrap();
    let out = run(&[
        "ncond",
        "--graph",
        &fixture("ex3", "graph.json"),
        "--mu",
        mu.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(s["measure"]["margin"], "-0.1");
    assert_eq!(s["measure"]["witness"], serde_json::json!(["1"]));
}

#[test]
fn tv_compare_rejects_match_longest() {
    let dir = tempfile::tempdir().unwrap();
    let args = |policy: &'static str, sub: &str| {
        vec![
            "tv-compare".to_string(),
            "--graph".into(),
            fixture("ex2", "graph.json"),
            "--mu".into(),
            fixture("ex2", "mu.json"),
            "--policy".into(),
            policy.into(),
            "--steps".into(),
            "400000".into(),
            "--out".into(),
            dir.path().join(sub).to_string_lossy().into_owned(),
        ]
    };
    let argv = args("ml", "ml");
    let out = run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    let s = summary(&dir.path().join("ml"));
    assert!(s["tv_pooled"].as_f64().unwrap() > 0.04, "{s}");
    assert_eq!(s["tail_mass_exact"], "0.0462646484375");

    let argv = args("fcfm", "fcfm");
    let out = run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = run(&[
            "simulate",
            "--graph",
            &fixture("ex3", "graph.json"),
            "--mu",
            &fixture("ex3", "mu.json"),
            "--steps",
            "20000",
            "--replicas",
            "3",
            "--seed",
            "11",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["summary.json", "frequencies.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let csv = std::fs::read_to_string(dirs[0].path().join("frequencies.csv")).unwrap();
    assert!(csv.starts_with("word,visits,frequency\nε,"));
}

#[test]
fn input_errors_exit_with_two() {
    let missing = run(&["info", "--graph", "/definitely/not/here.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("reading graph"));

    let bad_policy = run(&[
        "simulate",
        "--graph",
        &fixture("ex3", "graph.json"),
        "--policy",
        "lifo",
    ]);
    assert_eq!(bad_policy.status.code(), Some(2));

    let outside = run(&[
        "stationary-fcfm",
        "--graph",
        &fixture("ex3", "graph.json"),
        "--mu",
        "uniform",
    ]);
    assert_eq!(outside.status.code(), Some(2));

    let unknown = run(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn transform_outputs_feed_back_in() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "transform",
        "--blowup",
        "--graph",
        &fixture("square", "graph.json"),
        "--mu",
        "uniform",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let graph = dir.path().join("graph.json");
    let mu = dir.path().join("mu.json");
    let info = run(&["info", "--graph", graph.to_str().unwrap()]);
    let s: Value = serde_json::from_slice(&info.stdout).unwrap();
    assert_eq!(s["nodes"].as_array().unwrap().len(), 8);
    assert_eq!(s["self_loops"].as_array().unwrap().len(), 0);
    assert_eq!(s["bipartite"], false);
    let ncond = run(&[
        "ncond",
        "--graph",
        graph.to_str().unwrap(),
        "--mu",
        mu.to_str().unwrap(),
    ]);
    assert_eq!(ncond.status.code(), Some(0));

    let check = run(&[
        "transform",
        "--check",
        "--graph",
        &fixture("square", "graph.json"),
    ]);
    let g: Value = serde_json::from_slice(&check.stdout).unwrap();
    assert_eq!(g["self_loops"].as_array().unwrap().len(), 0);
    assert_eq!(g["edges"].as_array().unwrap().len(), 4);
}

#[test]
fn drift_and_identities_on_path_with_loop() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "drift",
        "--graph",
        &fixture("ex3", "graph.json"),
        "--mu",
        &fixture("ex3", "mu.json"),
        "--policy",
        &fixture("ex3", "policy.json"),
        "--fn",
        "ldelta",
        "--max-len",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(dir.path());
    assert_eq!(s["ldelta_bound"]["passed"], true);
    assert_eq!(s["threshold"], 2);
    let csv = std::fs::read_to_string(dir.path().join("drift.csv")).unwrap();
    assert!(csv
        .starts_with("word,drift,quadratic_residual,linear_left_residual,linear_right_residual\n"));
    assert_eq!(
        csv.lines().count(),
        1 + s["states"].as_u64().unwrap() as usize
    );

    let out = run(&[
        "verify-identities",
        "--graph",
        &fixture("ex2", "graph.json"),
        "--mu",
        "deg",
        "--max-len",
        "4",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn excursions_and_reversibility_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "excursions",
        "--graph",
        &fixture("ex3", "graph.json"),
        "--mu",
        &fixture("ex3", "mu.json"),
        "--steps",
        "30000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(dir.path());
    assert_eq!(s["permutation_valid"], s["excursions"]);
    let letters = std::fs::read_to_string(dir.path().join("matched_letters.csv")).unwrap();
    assert_eq!(letters.lines().count(), 4);
    assert!(dir.path().join("excursion_lengths.csv").exists());

    let out = run(&[
        "reversibility",
        "--graph",
        &fixture("square", "graph.json"),
        "--steps",
        "100000",
    ]);
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in [
        "pairs_tested",
        "max_normalized_discrepancy",
        "undetermined_forward",
    ] {
        assert!(s.get(key).is_some(), "{key}");
    }
    assert_eq!(
        out.status.code(),
        Some(if s["passed"] == true { 0 } else { 1 })
    );
}
