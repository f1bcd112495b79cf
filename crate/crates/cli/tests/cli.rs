use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn netiqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netiqc"))
        .args(args)
        .output()
        .expect("failed to launch netiqc")
}

fn run(sub: &str, name: &str, extra: &[&str]) -> Output {
    let path = fixture(name);
    let mut args = vec![sub, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    netiqc(&args)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn certify_exit_codes() {
    let ok = run("certify", "two_agent_certified.toml", &[]);
    assert_eq!(ok.status.code(), Some(0));
    let report = json(&ok);
    assert_eq!(report["verdict"], "certified");
    assert!((report["links"][0]["epsilon_star"].as_f64().unwrap() - 0.24).abs() < 1e-9);

    let bad = run("certify", "two_agent_large_radius.toml", &[]);
    assert_eq!(bad.status.code(), Some(1));
    let report = json(&bad);
    assert_eq!(report["verdict"], "not_certified");
    assert!(report["links"][0]["epsilon_star"].as_f64().unwrap() < 0.0);
    assert!(report["links"][0]["diagnostic"].is_object());
}

#[test]
fn invalid_specs_exit_two() {
    for name in ["malformed.toml", "isolated_vertex.toml", "does_not_exist.toml"] {
        let out = run("certify", name, &[]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with("error:"), "{name}: {err}");
    }
    let out = run("certify", "malformed.toml", &[]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
}

#[test]
fn grid_override_and_sequential_agree() {
    let a = json(&run(
        "certify",
        "matching.toml",
        &["--grid", "0.01:10:50", "--no-refine"],
    ));
    let b = json(&run(
        "certify",
        "matching.toml",
        &["--grid", "0.01:10:50", "--no-refine", "--sequential"],
    ));
    assert_eq!(a["links"], b["links"]);
    assert_eq!(a["grid"].as_array().unwrap().len(), 51);

    let out = run("certify", "matching.toml", &["--grid", "1:0.1:5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn structure_dumps() {
    for (name, dim, edges) in [
        ("two_agent_certified.toml", 2, 1),
        ("triangle.toml", 6, 3),
        ("four_agent_star.toml", 8, 4),
    ] {
        let out = run("structure", name, &[]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        let s = json(&out);
        assert_eq!(s["verified"], true);
        assert_eq!(s["p"].as_array().unwrap().len(), dim);
        assert_eq!(s["b"][0].as_array().unwrap().len(), edges);
        assert_eq!(s["bhat"].as_array().unwrap().len(), edges);
    }
}

#[test]
fn oracle_exit_codes() {
    let none = run(
        "oracle",
        "two_agent_certified.toml",
        &["--samples", "20", "--horizon", "40"],
    );
    assert_eq!(none.status.code(), Some(0));

    let found = run(
        "oracle",
        "two_agent_unstable.toml",
        &["--samples", "5", "--horizon", "40"],
    );
    assert_eq!(found.status.code(), Some(1));
    let report = json(&found);
    assert!(report.to_string().contains("found"));
}

#[test]
fn simulate_writes_columns_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.txt");
    let out = run(
        "simulate",
        "two_agent_certified.toml",
        &["--horizon", "5", "--dt", "0.01", "--out", path.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap().split_whitespace().collect::<Vec<_>>(),
        ["#", "t", "v1", "v2", "w1", "w2"]
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 400);
    assert!(rows.iter().all(|r| r.len() == 5));
    assert!(rows.last().unwrap()[1..].iter().all(|x| x.abs() < 1.0));
}

#[test]
fn simulate_with_negative_delta() {
    let out = run(
        "simulate",
        "two_agent_certified.toml",
        &["--horizon", "1", "--delta", "-0.1"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
