use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use clap::Parser;
use lscp_cli::{run, Cli, EvalReport, FitReport, OracleCheckReport};
use lscp_core::analysis::{BootstrapReport, CoverageGrid, MinCoverageResult, SimulationReport};
use lscp_core::report::to_json;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn run_args(args: &[&str]) -> Result<String, lscp_cli::CliError> {
    let mut v = vec!["lscp"];
    v.extend_from_slice(args);
    run(&Cli::try_parse_from(v).expect("arguments parse")).map(|e| e.text)
}

fn ok(args: &[&str]) -> String {
    run_args(args).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

/// Parse and re-emit; the text must survive unchanged.
fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(text: &str) -> T {
    let v: T = serde_json::from_str(text).unwrap();
    assert_eq!(to_json(&v).unwrap(), text);
    v
}

const CSV: &str = "x1,x2,x1x2,x2sq,cases,total
0,0,0,0,18,70
0,1,0,1,30,70
0,2,0,4,36,70
1,0,0,0,34,70
1,1,1,1,41,70
1,2,2,4,55,70
";

fn fixture(dir: &Path) -> PathBuf {
    let data = dir.join("cc.csv");
    std::fs::write(&data, CSV).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
alpha = 0.05
alpha_tilde = 0.05
seed = 11

[data]
path = "cc.csv"
intercept = true
theta_columns = ["x1", "x2"]
gamma_columns = ["x1x2", "x2sq"]
successes = "cases"
trials = "total"
a_vector = [0.0, 1.0, 0.0]
gamma_tilde = [0.0, 0.0]

[search]
lambda_points = 15
psi_points = 11
tol = 1e-4

[simulate]
gamma_both = { min = -0.1, max = 0.1, points = 3 }
batch_size = 100
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn eval_b_zero_prints_nominal() {
    let out = ok(&["eval", "--q", "2", "--norm-b", "0", "--norm-lambda", "1.5", "--alpha", "0.05"]);
    let r: EvalReport = round_trip(&out);
    assert_eq!(r.result.total, 0.95);
}

#[test]
fn grid_columns_for_opposite_psi_are_identical() {
    let out = ok(&[
        "grid",
        "--q",
        "2",
        "--norm-b",
        "0.7",
        "--lambda-values",
        "0,1,2.5,4",
        "--psi-values=-0.5,0.2,0.5",
        "--format",
        "csv",
    ]);
    for line in out.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], f[3], "{line}");
    }
    let js = ok(&["grid", "--q", "3", "--norm-b", "0.5", "--lambda-values", "0,2", "--psi-values=-0.5,0.5"]);
    let g: CoverageGrid = round_trip(&js);
    assert_eq!(g.values[1][0], g.values[1][1]);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("e.toml");
    std::fs::write(&cfg, "q = 2\nnorm_b = 0.5\nnorm_lambda = 2.0\npsi = 0.3\nalpha = 0.1\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_file: EvalReport = round_trip(&ok(&["--config", c, "eval"]));
    assert_eq!((from_file.inputs.alpha, from_file.inputs.norm_lambda), (0.1, 2.0));
    let flagged: EvalReport = round_trip(&ok(&["--config", c, "eval", "--norm-lambda", "3", "--alpha", "0.05"]));
    assert_eq!((flagged.inputs.alpha, flagged.inputs.norm_lambda, flagged.inputs.psi), (0.05, 3.0, 0.3));

    std::fs::write(&cfg, "q = 2\nnorm_bee = 0.5\n").unwrap();
    let e = run_args(&["--config", c, "eval"]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("norm_bee"), "{e}");
}

#[test]
fn fit_reports_both_scales() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let out = ok(&["--config", cfg.to_str().unwrap(), "fit"]);
    let r: FitReport = round_trip(&out);
    let iv = &r.intervals;
    assert_eq!(r.data.rows, 6);
    assert_eq!(iv.odds_ratio_full.lower, iv.full.lower.exp());
    assert_eq!(iv.odds_ratio_restricted.upper, iv.restricted.upper.exp());
    let expect = if iv.wald <= iv.critical_value { iv.restricted } else { iv.full };
    assert_eq!(iv.post_selection, expect);
    assert!(r.fit.norm_b > 0.0 && r.fit.norm_b < 1.0);
    assert_eq!(r.fit.wald, iv.wald);
}

#[test]
fn fit_from_flags_only() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let data = dir.path().join("cc.csv");
    let out = ok(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--intercept",
        "--theta-columns",
        "x1,x2",
        "--gamma-columns",
        "x1x2,x2sq",
        "--successes",
        "cases",
        "--trials",
        "total",
        "--a-vector",
        "0,1,0",
        "--gamma-tilde",
        "0,0",
    ]);
    let cfg = fixture(dir.path());
    assert_eq!(out, ok(&["--config", cfg.to_str().unwrap(), "fit"]));
}

#[test]
fn min_from_data_and_from_norm_b() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let c = cfg.to_str().unwrap();
    let m: MinCoverageResult = round_trip(&ok(&["--config", c, "min"]));
    let fit: FitReport = serde_json::from_str(&ok(&["--config", c, "fit"])).unwrap();
    assert_eq!(m.norm_b, fit.fit.norm_b);
    assert!(m.min_value < 0.95);
    let nb = format!("{}", fit.fit.norm_b);
    let direct: MinCoverageResult = round_trip(&ok(&["--config", c, "min", "--norm-b", &nb, "--q", "2"]));
    assert_eq!(direct.min_value, m.min_value);
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let c = cfg.to_str().unwrap();
    let a = ok(&["--config", c, "--workers", "1", "simulate", "--n-sims", "300"]);
    let b = ok(&["--config", c, "--workers", "3", "simulate", "--n-sims", "300"]);
    assert_eq!(a, b);
    let r: SimulationReport = round_trip(&a);
    assert_eq!(r.seed, 11);
    assert_eq!(r.points.len(), 3);
    let csv = ok(&["--config", c, "simulate", "--n-sims", "300", "--format", "csv"]);
    assert!(csv.starts_with("gamma_both,gamma_1,gamma_2,finite_sample_cp"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn unseeded_runs_record_their_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let text = std::fs::read_to_string(&cfg).unwrap().replace("seed = 11\n", "");
    std::fs::write(&cfg, text).unwrap();
    let c = cfg.to_str().unwrap();
    let a: SimulationReport = round_trip(&ok(&["--config", c, "simulate", "--n-sims", "50"]));
    let again = ok(&["--config", c, "--seed", &a.seed.to_string(), "simulate", "--n-sims", "50"]);
    assert_eq!(to_json(&a).unwrap(), again);
}

#[test]
fn bootstrap_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let c = cfg.to_str().unwrap();
    let out = ok(&["--config", c, "bootstrap", "-B", "100"]);
    let r: BootstrapReport = round_trip(&out);
    assert_eq!((r.b, r.seed, r.resamples.len()), (100, 11, 100));
    assert!(out.contains("\"B\": 100"));
    let csv = ok(&["--config", c, "bootstrap", "-B", "100", "--format", "csv"]);
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn oracle_check_point_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("o.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 5
[oracle]
n_draws = 200000
points = [
  { q = 2, norm_b = 0.6, norm_lambda = 1.0, psi = 0.4 },
  { q = 3, norm_b = 0.8, norm_lambda = 2.5, psi = -0.7 },
]
"#,
    )
    .unwrap();
    let r: OracleCheckReport = round_trip(&ok(&["--config", cfg.to_str().unwrap(), "oracle-check"]));
    assert_eq!(r.points.len(), 2);
    assert!(r.max_abs_standardized < 4.0, "{}", r.max_abs_standardized);
    assert_eq!(r.points[1].seed, 6);
}

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_lscp"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let c = cfg.to_str().unwrap();

    let st = bin().args(["eval", "--q", "2", "--norm-b", "0", "--norm-lambda", "1"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("\"total\": 9.4999999999999996e-1"));

    // config errors
    for args in [
        vec!["eval", "--norm-b", "0.5", "--norm-lambda", "1"],
        vec!["eval", "--q", "2", "--norm-b", "0.5", "--norm-lambda", "1", "--alpha", "1.5"],
        vec!["eval", "--q", "2", "--no-such-flag"],
        vec!["fit"],
        vec!["--config", "/nonexistent/x.toml", "eval"],
    ] {
        let st = bin().args(&args).output().unwrap();
        assert_eq!(st.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&st.stderr));
    }

    // data errors
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,x1x2,x2sq,cases,total\n0,0,0,0,18,70\n0,oops,0,1,30,70\n").unwrap();
    let st = bin().args(["--config", c, "fit", "--data", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("line 3") && err.contains("'x2'"), "{err}");
    let st = bin().args(["--config", c, "fit", "--successes", "nope"]).output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&st.stderr).contains("unknown column 'nope'"));

    // numerical: complete separation
    let sep = dir.path().join("sep.csv");
    std::fs::write(&sep, "x1,x2,x1x2,x2sq,cases,total\n0,0,0,0,0,70\n0,1,0,1,0,70\n0,2,0,4,70,70\n1,0,0,0,0,70\n1,1,1,1,0,70\n1,2,2,4,70,70\n").unwrap();
    let st = bin().args(["--config", c, "fit", "--data", sep.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(4), "{}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn output_file_and_help() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    let st = bin()
        .args(["eval", "--q", "2", "--norm-b", "0.3", "--norm-lambda", "1", "-o", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(st.stdout.is_empty());
    let r: EvalReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.inputs.norm_b, 0.3);

    let help = String::from_utf8(bin().arg("--help").output().unwrap().stdout).unwrap();
    for flag in ["--config", "--workers", "--output", "--format", "--alpha", "--alpha-tilde", "--seed", "--data"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    for cmd in ["eval", "grid", "min", "fit", "simulate", "bootstrap", "oracle-check"] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
}
