use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use bbo_arena::harness::read_study;

const BIN: &str = env!("CARGO_BIN_EXE_bbo-arena");

const TINY_SUITE: &str = r#"[
  {"model": "ridge", "dataset_kind": "linear", "dataset_seed": 1, "metric": "mse"},
  {"synthetic": "branin"}
]"#;

const FAMILY_SUITE: &str = r#"[
  {"model": "ridge", "dataset_kind": "linear", "dataset_seed": 1, "metric": "mse"},
  {"model": "ridge", "dataset_kind": "linear", "dataset_seed": 2, "metric": "mse"}
]"#;

fn bbo(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("BBO_ARENA_CACHE", dir.join("shared-cache"))
        .output()
        .expect("binary runs")
}

fn tiny_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--suite",
        "suite.json",
        "--optimizers",
        "random-search,gp-ei",
        "--trials",
        "2",
        "--batches",
        "4",
        "--batch-size",
        "2",
        "--rs-samples",
        "2000",
        "--out",
        "out",
    ];
    args.extend_from_slice(extra);
    bbo(dir, &args)
}

fn setup(suite: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("suite.json"), suite).unwrap();
    dir
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn tiny_manifest_runs_eight_studies_quickly() {
    let dir = setup(TINY_SUITE);
    let start = Instant::now();
    let out = tiny_run(dir.path(), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let studies = walk(&dir.path().join("out/results"));
    assert_eq!(studies.len(), 8);
    for s in &studies {
        let (header, log) = read_study(s).unwrap();
        assert_eq!(log.records.len(), 4);
        assert_eq!(header.batch_size, 2);
    }
    // calibrations land in the cache named by the environment
    assert!(dir.path().join("shared-cache").read_dir().unwrap().count() >= 2);
    assert!(!dir.path().join("out/cache").exists());
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else if p.extension().is_some_and(|x| x == "jsonl") {
            out.push(p);
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let dir = setup(TINY_SUITE);
    assert!(tiny_run(dir.path(), &[]).status.success());
    assert!(bbo(dir.path(), &["leaderboard", "--out", "out"])
        .status
        .success());
    let files = [
        "out/scores.csv",
        "out/scores.json",
        "out/calibration.json",
        "out/rs_pool.json",
        "out/leaderboard.csv",
        "out/leaderboard.json",
    ];
    let first: Vec<Vec<u8>> = files.iter().map(|f| read(dir.path(), f)).collect();

    assert!(tiny_run(dir.path(), &[]).status.success());
    assert!(bbo(dir.path(), &["leaderboard", "--out", "out"])
        .status
        .success());
    let resumed: Vec<Vec<u8>> = files.iter().map(|f| read(dir.path(), f)).collect();
    assert_eq!(first, resumed);

    assert!(tiny_run(dir.path(), &["--fresh"]).status.success());
    assert!(bbo(dir.path(), &["leaderboard", "--out", "out"])
        .status
        .success());
    let fresh: Vec<Vec<u8>> = files.iter().map(|f| read(dir.path(), f)).collect();
    assert_eq!(first, fresh);
}

#[test]
fn leaderboard_and_analysis_outputs() {
    let dir = setup(TINY_SUITE);
    assert!(tiny_run(dir.path(), &[]).status.success());
    let lb = bbo(dir.path(), &["leaderboard", "--out", "out"]);
    assert!(lb.status.success());
    let csv = String::from_utf8(read(dir.path(), "out/leaderboard.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "rank,team,score,median,rs_iters,rs_efficiency");
    assert_eq!(lines.len(), 3);
    let rs_row = lines
        .iter()
        .find(|l| l.contains(",random-search,"))
        .unwrap();
    assert!(rs_row.ends_with(",8.0,1.000"), "{rs_row}");
    assert!(dir.path().join("out/rs_curve.csv").exists());

    let an = bbo(
        dir.path(),
        &["analyze", "--out", "out", "--bootstrap-B", "200"],
    );
    assert!(an.status.success());
    let stdout = String::from_utf8_lossy(&an.stdout);
    assert!(stdout.contains("Ranking 1") && stdout.contains("Freq"));
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "out/analysis.json")).unwrap();
    assert_eq!(report["replications"], 200);
}

#[test]
fn leaderboard_without_random_search_omits_rs_columns() {
    let dir = setup(TINY_SUITE);
    let out = bbo(
        dir.path(),
        &[
            "run",
            "--suite",
            "suite.json",
            "--optimizers",
            "de",
            "--trials",
            "1",
            "--batches",
            "2",
            "--batch-size",
            "2",
            "--rs-samples",
            "1000",
            "--out",
            "out",
        ],
    );
    assert!(out.status.success());
    let lb = bbo(dir.path(), &["leaderboard", "--out", "out"]);
    assert!(lb.status.success());
    assert!(String::from_utf8_lossy(&lb.stderr).contains("RS iteration columns are omitted"));
    let csv = String::from_utf8(read(dir.path(), "out/leaderboard.csv")).unwrap();
    assert!(
        csv.lines().nth(1).unwrap().starts_with("1,de,")
            && csv.lines().nth(1).unwrap().ends_with(",,")
    );
    let an = bbo(
        dir.path(),
        &["analyze", "--out", "out", "--bootstrap-B", "100"],
    );
    assert!(an.status.success());
    assert!(String::from_utf8_lossy(&an.stderr).contains("one trial"));
}

#[test]
fn missing_suite_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = bbo(
        dir.path(),
        &["run", "--suite", "no/such/suite.json", "--out", "out"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/suite.json"));
}

#[test]
fn exit_codes() {
    let dir = setup(TINY_SUITE);
    let unknown = bbo(
        dir.path(),
        &[
            "run",
            "--suite",
            "suite.json",
            "--optimizers",
            "nope",
            "--out",
            "out",
        ],
    );
    assert_eq!(unknown.status.code(), Some(2));
    let usage = bbo(dir.path(), &["run", "--trials", "many"]);
    assert_eq!(usage.status.code(), Some(2));
    let no_results = bbo(dir.path(), &["leaderboard", "--out", "empty"]);
    assert_eq!(no_results.status.code(), Some(3));
    assert!(tiny_run(dir.path(), &[]).status.success());
    let low_b = bbo(
        dir.path(),
        &["analyze", "--out", "out", "--bootstrap-B", "99"],
    );
    assert_eq!(low_b.status.code(), Some(2));
    std::fs::write(dir.path().join("out/calibration.json"), "not json").unwrap();
    let corrupt = bbo(dir.path(), &["leaderboard", "--out", "out"]);
    assert_eq!(corrupt.status.code(), Some(3));
    let bad_samples = bbo(
        dir.path(),
        &["calibrate", "--suite", "suite.json", "--rs-samples", "10"],
    );
    assert_eq!(bad_samples.status.code(), Some(2));
}

#[test]
fn calibrate_writes_json() {
    let dir = setup(TINY_SUITE);
    let out = bbo(
        dir.path(),
        &[
            "calibrate",
            "--suite",
            "suite.json",
            "--rs-samples",
            "1000",
            "--out",
            "cal",
        ],
    );
    assert!(out.status.success());
    let cals: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cals.as_array().unwrap().len(), 2);
    assert_eq!(cals[1]["problem"], "branin");
    assert_eq!(cals[1]["known_opt"], true);
    assert!(dir.path().join("cal/calibration.json").exists());
}

fn first_events(path: &Path) -> Vec<String> {
    let (_, log) = read_study(path).unwrap();
    log.records[0].events.clone()
}

#[test]
fn warmstart_rerun_offers_archives_by_name_only() {
    let dir = setup(FAMILY_SUITE);
    let run = bbo(
        dir.path(),
        &[
            "run",
            "--suite",
            "suite.json",
            "--optimizers",
            "ws:turbo-lite,turbo-lite",
            "--trials",
            "2",
            "--batches",
            "3",
            "--batch-size",
            "3",
            "--rs-samples",
            "1000",
            "--anonymize",
            "--out",
            "out",
        ],
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let rerun = bbo(
        dir.path(),
        &["warmstart-rerun", "--out", "out", "--bootstrap-B", "200"],
    );
    assert!(
        rerun.status.success(),
        "{}",
        String::from_utf8_lossy(&rerun.stderr)
    );
    let study = |team: &str| {
        dir.path().join(format!(
            "out/warmstart/results/{team}/ridge-linear2-mse/trial-0.jsonl"
        ))
    };
    assert_eq!(
        first_events(&study("ws_turbo-lite")),
        vec!["warm start: 4 queued, 0 archived"]
    );
    assert_eq!(
        first_events(&study("turbo-lite")),
        vec!["warm start: ignored"]
    );
    let cmp: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "out/warmstart/comparison.json")).unwrap();
    assert_eq!(cmp.as_array().unwrap().len(), 2);

    // with names hidden the archives no longer match the space
    let anon = bbo(
        dir.path(),
        &[
            "warmstart-rerun",
            "--out",
            "out",
            "--anonymize",
            "--fresh",
            "--bootstrap-B",
            "200",
        ],
    );
    assert!(anon.status.success());
    assert_eq!(
        first_events(&study("ws_turbo-lite")),
        vec!["warm start: ignored"]
    );
}

#[test]
fn warmstart_rerun_without_prior_runs_cold() {
    let dir = setup(FAMILY_SUITE);
    std::fs::create_dir_all(dir.path().join("out")).unwrap();
    let rerun = bbo(
        dir.path(),
        &[
            "warmstart-rerun",
            "--out",
            "out",
            "--suite",
            "suite.json",
            "--optimizers",
            "random-search",
            "--trials",
            "1",
            "--batches",
            "2",
            "--batch-size",
            "2",
            "--bootstrap-B",
            "100",
        ],
    );
    assert!(
        rerun.status.success(),
        "{}",
        String::from_utf8_lossy(&rerun.stderr)
    );
    assert!(String::from_utf8_lossy(&rerun.stderr).contains("running cold"));
}
