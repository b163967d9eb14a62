use std::fs;
use std::path::Path;
use std::process::Command;

use s3lab::cli::{main_from, EXIT_FAIL, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_from(std::iter::once("s3lab").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn sample() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/overflow.json").display().to_string()
}

#[test]
fn run_prints_one_report_per_policy() {
    let (code, out, _) = run(&["run", &sample()]);
    assert_eq!(code, EXIT_OK);
    let reports: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[1]["status"], "aborted");
    assert_eq!(reports[2]["neighbor_intact"], true);
}

#[test]
fn run_selected_policies() {
    let (code, out, _) = run(&["run", &sample(), "--policy", "sma,legacy"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().next().unwrap().contains("\"policy\":\"sma\""));
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(sample()).unwrap().replace("\"status\": \"aborted\"", "\"status\": \"completed\"");
    let path = dir.path().join("s.json");
    fs::write(&path, text).unwrap();
    let (code, _, err) = run(&["run", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_FAIL);
    assert!(err.contains("expected status completed, got aborted"), "{err}");
}

#[test]
fn schema_error_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"name":"x","allocations":[{"id":"a","region":"moon","size":1,"init":{"zero":true}}],"calls":[]}"#)
        .unwrap();
    let (code, _, err) = run(&["run", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("allocations[0].region"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).0, EXIT_USAGE);
    assert_eq!(run(&["run", &sample(), "--policy", "strict"]).0, EXIT_USAGE);
    assert_eq!(run(&["fuzz", "--count", "0"]).0, EXIT_USAGE);
    assert_eq!(run(&["bench", "--reps", "3"]).0, EXIT_USAGE);
    assert_eq!(run(&["run", "/nonexistent/s.json"]).0, EXIT_USAGE);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn corpus_writes_files_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["corpus", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("54 scenarios (27 bad, 27 good)"));
    assert!(out.contains("expectation mismatches: 0"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 54);
}

#[test]
fn corpus_subset() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&[
        "corpus", "--out", dir.path().to_str().unwrap(), "--regions", "heap", "--functions", "memcpy,strcat", "--magnitudes", "2",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("4 scenarios (2 bad, 2 good)"), "{out}");
    assert_eq!(run(&["corpus", "--out", dir.path().to_str().unwrap(), "--functions", "gets"]).0, EXIT_USAGE);
}

#[test]
fn fuzz_passes_and_catches_injected_defect() {
    let dir = tempfile::tempdir().unwrap();
    let repro = dir.path().join("repro");
    let (code, out, _) = run(&["fuzz", "--count", "300", "--seed", "7", "--repro-dir", repro.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(!repro.exists());

    let (code, out, _) =
        run(&["fuzz", "--count", "300", "--seed", "7", "--repro-dir", repro.to_str().unwrap(), "--inject-mutation"]);
    assert_eq!(code, EXIT_FAIL, "{out}");
    let file = fs::read_dir(&repro).unwrap().next().unwrap().unwrap().path();
    let text = fs::read_to_string(file).unwrap();
    s3lab::scenario::parse_scenario(&text).unwrap();
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let (code, out, _) =
        run(&["bench", "--sizes", "16,1024", "--regions", "stack", "--reps", "11", "--out", csv.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("sma/annexk"));
    let text = fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "function,region,bytes,policy,median_ns,reps");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("memcpy,stack,16,legacy,"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_s3lab");
    let status = Command::new(bin).args(["run", &sample(), "--policy", "sma"]).output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    let status = Command::new(bin).args(["frobnicate"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}
