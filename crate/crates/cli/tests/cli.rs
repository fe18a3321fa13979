use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ema_chart::optimal_set;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ema-chart"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn compare_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = run(
        &[
            "compare",
            "--simulate",
            "--subjects",
            "200",
            "--chi",
            "0.19",
            "--seed",
            "7",
        ],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "pvalues.csv", "ecdf.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let pvalues = fs::read_to_string(out.join("pvalues.csv")).unwrap();
    assert_eq!(pvalues.lines().count(), 13);
    assert_eq!(pvalues.lines().next(), Some("pair,metric,p"));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 200 * 4);
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["resolved"]["simulation"]["seed"], 7);
    assert_eq!(m["resolved"]["report"]["subjects"], 200);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["compare", "--simulate", "--subjects", "150", "--seed", "3"];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(run(&args, &a).status.success());
    assert!(run(&args, &b).status.success());
    let mut single = args.to_vec();
    single.extend(["--threads", "1"]);
    assert!(run(&single, &c).status.success());
    for f in ["metrics.csv", "pvalues.csv", "ecdf.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs between reruns");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f} differs with one thread");
    }
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn design_grid_optimal_rows_match_optimal_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let o = run(
        &[
            "design-grid",
            "--N",
            "180",
            "--v",
            "4",
            "--s-steps",
            "10",
            "--alpha-steps",
            "5",
        ],
        &out,
    );
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("design_grid.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("S,alpha,u1,u2,optimal"));
    let optimal: Vec<(f64, f64)> = lines
        .filter(|l| l.ends_with(",true"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    let set = optimal_set(180, 4);
    assert_eq!(optimal.len(), set.len());
    for ((s, a), p) in optimal.iter().zip(&set) {
        assert_eq!(*s, p.start_point as f64);
        assert_eq!(*a, p.alpha);
    }
    assert_eq!(text.lines().count(), 1 + 10 * 5 + set.len());
}

#[test]
fn replay_logs_bounds_per_slot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("replay");
    let series = fixture("one_subject.csv");
    let o = run(
        &["replay", "--series", series.to_str().unwrap(), "--algorithm", "alg2"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("trigger_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("subject_id,slot,triggered,alpha,lower,upper"));
    assert_eq!(log.lines().count(), 1 + 180);
    let with_bounds = log
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(4).is_some_and(|x| !x.is_empty()))
        .count();
    assert!(with_bounds > 30);
}

#[test]
fn alg1_on_external_data_needs_expected_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("replay");
    let series = fixture("one_subject.csv");
    let o = run(
        &["replay", "--series", series.to_str().unwrap(), "--algorithm", "alg1"],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(manifest(&out)["status"], "error");

    let o = run(
        &[
            "replay",
            "--series",
            series.to_str().unwrap(),
            "--algorithm",
            "alg1",
            "--n-bar-prime",
            "60",
        ],
        &out,
    );
    assert!(o.status.success());
    assert_eq!(manifest(&out)["resolved"]["n_bar_prime"], 60.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    // domain error
    let o = run(&["simulate", "--subjects", "3", "--chi", "1.5"], &out);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["status"], "error");
    assert!(m["error"].as_str().unwrap().contains("adherence rate"));
    // usage errors
    assert_eq!(run(&["simulate", "--no-such-flag"], &out).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--param-range", "3-4"], &out).status.code(), Some(2));
    assert_eq!(run(&["compare"], &out).status.code(), Some(2));
    // missing input file
    assert_eq!(
        run(&["ingest", "--input", "/nonexistent.csv"], &out).status.code(),
        Some(1)
    );
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "subjects = 4\nchi = 0.5\nseed = 11\nn_days = 2\n").unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--chi", "1.0"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["resolved"]["simulation"]["n_subjects"], 4);
    assert_eq!(m["resolved"]["simulation"]["adherence_rate"], 1.0);
    assert_eq!(m["resolved"]["simulation"]["seed"], 11);
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    // full adherence over 2 days of 6 slots
    assert_eq!(series.lines().count(), 1 + 4 * 12);
    assert!(!series.contains("NA"));
}

#[test]
fn ingest_writes_series_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ing");
    let input = fixture("tyt_synthetic.csv");
    let o = run(&["ingest", "--input", input.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["users"]["retained"], 8);

    // cleaning the cleaned rows again gives the same series
    let again = dir.path().join("again");
    let cleaned = out.join("cleaned.csv");
    assert!(run(&["ingest", "--input", cleaned.to_str().unwrap()], &again)
        .status
        .success());
    assert_eq!(
        fs::read(out.join("series.csv")).unwrap(),
        fs::read(again.join("series.csv")).unwrap()
    );
}
