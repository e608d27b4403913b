use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const HEADER: &str = "formula_id,manifold,q,t,h,N,seed,value,stderr,target,target_provenance,pass";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bismut-lab"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cfg: &Path, out: &Path, extra: &[&str], threads: usize) -> Output {
    bin()
        .arg("run")
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .unwrap()
}

const SMALL: [&str; 4] = ["--paths", "20", "--step", "0.01"];

#[test]
fn list_suites_prints_the_catalogue() {
    let out = bin().arg("list-suites").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ibp → Shigekawa theorem"));
    assert!(text.lines().count() >= 9);
}

#[test]
fn every_shipped_config_runs_at_small_size() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let cfg = entry.unwrap().path();
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg, dir.path(), &SMALL, 2);
        let code = out.status.code().unwrap();
        assert!(code == 0 || code == 1, "{}: {}", cfg.display(), String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(HEADER));
        let rows: Vec<&str> = lines.collect();
        assert!(!rows.is_empty());
        let mut any_fail = false;
        for row in &rows {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols.len(), 12, "{row}");
            assert_eq!(cols[6], "20240601");
            any_fail |= cols[11] == "false";
        }
        assert_eq!(code == 1, any_fail, "{}", cfg.display());
        let jsonl = std::fs::read_to_string(dir.path().join("results.jsonl")).unwrap();
        assert_eq!(jsonl.lines().count(), rows.len());
        for line in jsonl.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in ["suite", "config_digest", "criterion", "tolerances", "overrides", "formula_id", "N", "pass"] {
                assert!(v.get(key).is_some(), "{key} missing in {line}");
            }
        }
    }
}

#[test]
fn output_is_independent_of_threads_and_rewritten_on_rerun() {
    let cfg = config("all.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(&cfg, a.path(), &SMALL, 1);
    let rb = run(&cfg, b.path(), &SMALL, 4);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "results.csv"), read(b.path(), "results.csv"));
    assert_eq!(read(a.path(), "results.jsonl"), read(b.path(), "results.jsonl"));
    assert_eq!(ra.stdout, rb.stdout);
    run(&cfg, a.path(), &SMALL, 3);
    assert_eq!(read(a.path(), "results.csv"), read(b.path(), "results.csv"));
}

#[test]
fn command_line_overrides_reach_the_rows_and_digest() {
    let cfg = config("bismut_q0.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(&cfg, a.path(), &SMALL, 1);
    let rb = run(&cfg, b.path(), &["--paths", "20", "--step", "0.01", "--seed", "7"], 1);
    let digest = |o: &Output| String::from_utf8_lossy(&o.stdout).lines().next().unwrap().to_string();
    assert_ne!(digest(&ra), digest(&rb));
    let csv = std::fs::read_to_string(b.path().join("results.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[4], row[5], row[6]), ("0.01", "20", "7"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    for text in [r#"{ "suite": "bismut_q0", "manifold": "klein_bottle" }"#, r#"{ "suite": "warp" }"#, "{"] {
        std::fs::write(&bad, text).unwrap();
        let out = run(&bad, dir.path(), &[], 1);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(!out.stderr.is_empty());
    }
    let out = run(&dir.path().join("missing.json"), dir.path(), &[], 1);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&config("bismut_q0.json"), dir.path(), &["--step", "0.3"], 1);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("results.csv").exists());
}
