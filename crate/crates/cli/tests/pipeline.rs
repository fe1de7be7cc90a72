//! End-to-end runs of the `kgprobe` binary over the bundled places graph.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const STAGES: [&str; 8] = [
    "ingest", "paths", "gen", "run", "oracle", "coverage", "mitigate", "report",
];

const FAULTS: &str = r#"{
  "default_flip": 0.05,
  "rules": [
    { "parent": "C1", "template": 2, "action": { "answer": "no" } },
    { "child": "L1", "context": "seq_second", "action": { "answer": "invalid" } }
  ]
}"#;

fn config(workdir: &str) -> String {
    format!(
        r#"
workdir = "{workdir}"
seed = 11

[[domain]]
name = "places"
fixture = "places"

[[sut]]
kind = "scripted"
name = "truthful"

[[sut]]
kind = "scripted"
name = "faulty"
seed = 4
faults = "faults.json"
"#
    )
}

fn setup(dir: &Path, workdir: &str) -> PathBuf {
    fs::write(dir.join("faults.json"), FAULTS).unwrap();
    let path = dir.join(format!("{workdir}.toml"));
    fs::write(&path, config(workdir)).unwrap();
    path
}

fn kgprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgprobe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stage(name: &str, config: &Path) -> Output {
    let out = kgprobe(&[name, "--config", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{name} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_on_places_fixture_plans_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "work");
    for s in ["ingest", "paths"] {
        stage(s, &cfg);
    }
    let out = stage("gen", &cfg);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("294 relations, 294 atomic, 588 sequential-intra, 588 sequential-inter"),
        "{stdout}"
    );
    let plans = fs::read_to_string(dir.path().join("work/places/plans.jsonl")).unwrap();
    assert_eq!(plans.lines().count(), 294);
}

#[test]
fn oracle_without_transcripts_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "work");
    for s in ["ingest", "paths", "gen"] {
        stage(s, &cfg);
    }
    let out = kgprobe(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing artifact"), "{stderr}");
}

#[test]
fn stage_before_ingest_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "work");
    assert_eq!(
        kgprobe(&["paths", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    assert_eq!(
        kgprobe(&["ingest", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, config("work").replace("faults.json", "nowhere.json")).unwrap();
    assert_eq!(
        kgprobe(&["ingest", "--config", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );

    let cfg = setup(dir.path(), "work");
    let out = kgprobe(&["run", "--config", cfg.to_str().unwrap(), "--sut", "ghost"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(kgprobe(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn full_pipeline_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let reports: Vec<_> = ["first", "second"]
        .iter()
        .map(|w| {
            let cfg = setup(dir.path(), w);
            for s in STAGES {
                stage(s, &cfg);
            }
            read_dir_sorted(&dir.path().join(w).join("places/report"))
        })
        .collect();
    let names: Vec<&str> = reports[0].iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "coverage.csv",
            "errors.csv",
            "mitigation.csv",
            "mitigation_folds.csv",
            "overlap.csv",
            "overlap_plot.json",
            "results.jsonl"
        ]
    );
    assert_eq!(reports[0], reports[1]);

    // Re-running every stage in place changes nothing.
    let cfg = dir.path().join("first.toml");
    for s in STAGES {
        stage(s, &cfg);
    }
    assert_eq!(read_dir_sorted(&dir.path().join("first/places/report")), reports[0]);
}

#[test]
fn rerun_resumes_and_offline_replays_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "work");
    for s in ["ingest", "paths", "gen", "run"] {
        stage(s, &cfg);
    }
    let out = stage("run", &cfg);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("1470 conversations, 2058 turns, 0 cache hits, 1470 resumed"),
        "{stdout}"
    );

    fs::remove_dir_all(dir.path().join("work/places/runs")).unwrap();
    let out = kgprobe(&["run", "--config", cfg.to_str().unwrap(), "--offline", "--sut", "faulty"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("2058 cache hits"));
}

#[test]
fn report_honours_out_and_template_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "work");
    for s in &STAGES[..7] {
        stage(s, &cfg);
    }
    let c = cfg.to_str().unwrap();
    let out = kgprobe(&["mitigate", "--config", c, "--k", "3", "--template", "1", "--seed", "5"]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("work/places/mitigation.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!((m["k"].as_u64(), m["seed"].as_u64()), (Some(3), Some(5)));
    let scopes: Vec<String> = m["totals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["scope"].to_string())
        .collect();
    assert_eq!(scopes, [r#"{"template":1}"#, r#""all""#]);

    let target = dir.path().join("elsewhere");
    let out = kgprobe(&["report", "--config", c, "--out", target.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(target.join("results.jsonl").exists());
}
