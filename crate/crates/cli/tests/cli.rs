//! Black-box tests of the `upen` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde::Deserialize;

fn upen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upen"))
        .args(args)
        .current_dir(cwd)
        .env_remove("UPEN_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = upen(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[derive(Debug, Deserialize, PartialEq)]
struct Summary {
    problem: String,
    algorithm: String,
    constraint: String,
    gamma: Option<f64>,
    relative_error: f64,
    outer_iterations: Option<usize>,
    total_inner_iterations: Option<usize>,
    wall_time_seconds: f64,
    residual_norm: f64,
    noise_norm: f64,
    optimal_lambda: Option<f64>,
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn gen_writes_inventory_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    ok(
        &["gen", "--problem", "t1", "--delta", "0.01", "--seed", "7", "--out", "a"],
        root,
    );
    ok(
        &["gen", "--problem", "t1", "--delta", "0.01", "--seed", "7", "--out", "b"],
        root,
    );
    for f in ["matrix.csv", "u_true.csv", "y.csv", "b.csv", "manifest.json"] {
        let a = fs::read(root.join("a").join(f)).unwrap();
        let b = fs::read(root.join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("a/manifest.json")).unwrap()).unwrap();
    let ratio = manifest["noise_ratio"].as_f64().unwrap();
    assert!((ratio - 0.01).abs() < 1e-12, "noise ratio {ratio}");
}

#[test]
fn gen_nmr_writes_kronecker_factors() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "gen",
            "--problem",
            "nmr2d",
            "--n1",
            "8",
            "--n2",
            "8",
            "--m1",
            "12",
            "--m2",
            "16",
            "--out",
            "p",
        ],
        tmp.path(),
    );
    let dir = tmp.path().join("p");
    assert!(dir.join("k1.csv").exists() && dir.join("k2.csv").exists());
    assert_eq!(fs::read_to_string(dir.join("u_true.csv")).unwrap().lines().count(), 64);
}

#[test]
fn solve_gupenmm_t2_nonnegative_is_in_band() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "solve",
            "--problem",
            "t2",
            "--algorithm",
            "gupenmm",
            "--constraint",
            "nonneg",
            "--delta",
            "0.01",
            "--out",
            "r",
        ],
        tmp.path(),
    );
    let dir = tmp.path().join("r");
    for f in ["solution.csv", "lambda.csv", "trace.csv", "summary.json"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let s = summary(&dir);
    assert!(
        (0.015..=0.06).contains(&s.relative_error),
        "relative error {}",
        s.relative_error
    );
    assert_eq!(s.constraint, "nonneg");
    assert!(s.outer_iterations.unwrap() >= 1);
}

#[test]
fn tikhonov_sweep_optimum_has_expected_magnitude() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "solve",
            "--algorithm",
            "tikhonov-sweep",
            "--problem",
            "t1",
            "--constraint",
            "nonneg",
            "--delta",
            "0.1",
            "--out",
            "r",
        ],
        tmp.path(),
    );
    let s = summary(&tmp.path().join("r"));
    let lambda = s.optimal_lambda.unwrap();
    assert!((1.5e-4..=1.5e-2).contains(&lambda), "optimal lambda {lambda}");
    let grid = fs::read_to_string(tmp.path().join("r/tikhonov.csv")).unwrap();
    assert_eq!(grid.lines().count(), 101);
}

#[test]
fn bp_passes_gamma_through() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "solve",
            "--algorithm",
            "bp",
            "--gamma",
            "12.5",
            "--problem",
            "t1",
            "--out",
            "r",
        ],
        tmp.path(),
    );
    let s = summary(&tmp.path().join("r"));
    assert_eq!(s.algorithm, "bp");
    assert_eq!(s.gamma, Some(12.5));
}

#[test]
fn repeated_solves_give_identical_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "solve",
            "--problem",
            "t3",
            "--algorithm",
            "upenmm",
            "--seed",
            "4",
            "--out",
            out,
        ]
    };
    ok(&args("a"), tmp.path());
    ok(&args("b"), tmp.path());
    let mut a = summary(&tmp.path().join("a"));
    let mut b = summary(&tmp.path().join("b"));
    a.wall_time_seconds = 0.0;
    b.wall_time_seconds = 0.0;
    assert_eq!(a, b);
    for f in ["solution.csv", "lambda.csv", "trace.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn solve_from_problem_directory_matches_generated_problem() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["gen", "--problem", "t1", "--seed", "3", "--out", "p"], tmp.path());
    ok(
        &[
            "solve",
            "--problem-dir",
            "p",
            "--algorithm",
            "gupenmm",
            "--out",
            "from-dir",
        ],
        tmp.path(),
    );
    ok(
        &[
            "solve",
            "--problem",
            "t1",
            "--seed",
            "3",
            "--algorithm",
            "gupenmm",
            "--out",
            "direct",
        ],
        tmp.path(),
    );
    let a = summary(&tmp.path().join("from-dir"));
    let b = summary(&tmp.path().join("direct"));
    assert_eq!(a.relative_error, b.relative_error);
    assert_eq!(a.outer_iterations, b.outer_iterations);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("run.conf"),
        "# base run\nproblem = t1\nalgorithm = bp\ngamma = 50\nout = from-file\n",
    )
    .unwrap();
    ok(&["solve", "--config", "run.conf", "--gamma", "25"], tmp.path());
    let s = summary(&tmp.path().join("from-file"));
    assert_eq!(s.gamma, Some(25.0));
    assert_eq!(s.algorithm, "bp");
}

#[test]
fn output_directory_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_upen"))
        .args(["gen", "--problem", "t1"])
        .current_dir(tmp.path())
        .env("UPEN_OUTPUT_DIR", "env-out")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("env-out/manifest.json").exists());
}

#[test]
fn exit_codes_distinguish_usage_from_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| upen(args, tmp.path()).status.code().unwrap();
    assert_eq!(code(&["solve", "--bogus"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["solve", "--algorithm", "bp"]), 2);
    assert_eq!(code(&["solve", "--delta", "-1"]), 2);
    assert_eq!(code(&["solve", "--tol-lambda", "2"]), 2);
    assert_eq!(
        code(&["solve", "--problem", "nmr2d", "--constraint", "none", "--out", "x"]),
        2
    );
    assert_eq!(code(&["solve", "--config", "missing.conf"]), 2);
    assert_eq!(code(&["solve", "--problem-dir", "nowhere", "--out", "x"]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn verify_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["verify", "--trials", "20", "--max-p", "60", "--out", "v"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sherman_morrison_vs_dense"));
    assert!(!stdout.contains("FAIL"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("v/oracle_report.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn report_emits_plot_data_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &["solve", "--problem", "t1", "--algorithm", "upenmm", "--out", "u"],
        tmp.path(),
    );
    ok(
        &["solve", "--problem", "t1", "--algorithm", "gupenmm", "--out", "g"],
        tmp.path(),
    );
    ok(&["report", "u", "g", "--out", "rep"], tmp.path());
    let rep = tmp.path().join("rep");
    let noise = summary(&tmp.path().join("u")).noise_norm;
    let residual = fs::read_to_string(rep.join("u.residual.dat")).unwrap();
    for line in residual.lines().skip(1) {
        let cols: Vec<f64> = line.split_whitespace().map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[2], noise);
    }
    let lambda = fs::read_to_string(rep.join("g.lambda.dat")).unwrap();
    assert_eq!(lambda.lines().count(), 101);
    let table = fs::read_to_string(rep.join("table.md")).unwrap();
    assert!(table.contains("| u | t1 | upenmm |") && table.contains("| g | t1 | gupenmm |"));
}

#[test]
fn report_rejects_bad_traces_without_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["solve", "--problem", "t1", "--out", "good"], tmp.path());
    ok(&["solve", "--problem", "t1", "--out", "bad"], tmp.path());
    let trace = tmp.path().join("bad/trace.csv");
    let mut text = fs::read_to_string(&trace).unwrap();
    let rows = text.lines().count() - 1;
    text.push_str("99,oops,1,1,1,1,true,0,false,0\n");
    fs::write(&trace, text).unwrap();
    let out = upen(&["report", "good", "bad", "--out", "rep"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("row {}", rows + 1)), "{err}");
    assert!(!tmp.path().join("rep").exists());

    let header = fs::read_to_string(&trace).unwrap().lines().next().unwrap().to_string();
    fs::write(&trace, header + "\n").unwrap();
    let out = upen(&["report", "bad", "--out", "rep"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    assert!(!tmp.path().join("rep").exists());
}

#[test]
fn sweep_runs_every_combination() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "sweep",
            "--problem",
            "t1",
            "--out",
            "sw",
            "--vary",
            "seed=0..2",
            "--vary",
            "algorithm=upenmm,gupenmm",
        ],
        tmp.path(),
    );
    let mut reader = csv::Reader::from_path(tmp.path().join("sw/sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r[12].is_empty(), "run failed: {}", &r[12]);
        assert!(tmp.path().join("sw").join(&r[0]).join("summary.json").exists());
    }
    let out = upen(&["sweep", "--out", "bad", "--vary", "seed"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
