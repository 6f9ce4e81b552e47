use std::fs;
use std::path::{Path, PathBuf};

use switchback::estimators::{AggregatedSales, Estimate};
use switchback::{EstimatorSuite, Result};
use switchback_cli::{cmd_simulate, cmd_verify_with, run, CliError, RunConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const MINIMAL: &str = r#"
[demand]
reference_price = 0.5

[[demand.atoms]]
gamma = 0.5
weight = 1.0
family = { kind = "uniform", lo = 0.0, hi = 1.0 }

[design]
kind = "two_price"
reference_price = 0.5
eps = 0.1
q = 0.3
delta = 1e-2

[run]
replications = 1
seed = 42
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn args(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "switchback".to_string(),
        cmd.to_string(),
        "--config".to_string(),
        config.display().to_string(),
        "--out".to_string(),
        out.display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn simulate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    assert_eq!(run(args("simulate", &cfg, &out, &[])), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let names: Vec<&str> =
        summary["estimates"].as_array().unwrap().iter().map(|e| e["estimator"].as_str().unwrap()).collect();
    assert_eq!(names, ["naive_total", "naive_same_day"]);
    let horizon = summary["runs"][0]["horizon"].as_u64().unwrap() as usize;
    let trace = fs::read_to_string(out.join("traces/trace_0000.csv")).unwrap();
    assert_eq!(trace.lines().count(), horizon + 1);
    assert_eq!(trace.lines().next().unwrap(), "t,price_index,price,same_day_sales,delayed_sales,total_sales");
}

#[test]
fn mismatched_reference_price_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replacen("reference_price = 0.5\neps", "reference_price = 0.6\neps", 1);
    let cfg = write_config(dir.path(), &text);
    assert_eq!(run(args("simulate", &cfg, &dir.path().join("out"), &[])), 2);
    let err = cmd_simulate(&RunConfig::load(&cfg).unwrap()).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CliError::Validation(_)));
    assert!(msg.contains("0.5") && msg.contains("0.6"), "{msg}");
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(run(args("simulate", &missing, dir.path(), &[])), 2);
    let cfg = write_config(dir.path(), "[demand]\nreference_price = 0.5\n");
    assert_eq!(run(args("sweep", &cfg, dir.path(), &[])), 2);
    assert_eq!(run(["switchback", "simulate"]), 2);
    assert_eq!(run(["switchback", "--help"]), 0);
}

#[test]
fn reruns_write_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run(args("simulate", &cfg, &a, &["--replications", "2"])), 0);
    assert_eq!(run(args("simulate", &cfg, &b, &["--replications", "2"])), 0);
    assert_eq!(run(args("simulate", &cfg, &c, &["--replications", "2", "--seed", "43"])), 0);
    for j in ["trace_0000.csv", "trace_0001.csv"] {
        let x = fs::read(a.join("traces").join(j)).unwrap();
        assert_eq!(x, fs::read(b.join("traces").join(j)).unwrap());
        assert_ne!(x, fs::read(c.join("traces").join(j)).unwrap());
    }
}

#[test]
fn fixed_horizon_flag_sets_trace_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    assert_eq!(run(args("simulate", &cfg, &out, &["--fixed-horizon", "37"])), 0);
    let trace = fs::read_to_string(out.join("traces/trace_0000.csv")).unwrap();
    assert_eq!(trace.lines().count(), 38);
}

#[test]
fn sweep_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("replications = 1", "replications = 50\ndeltas = [1e-1, 5e-2, 1e-2]\nepsilons = [0.1, 0.05, 0.02]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    assert_eq!(run(args("sweep", &cfg, &out, &[])), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9 * 2);
    assert_eq!(csv.lines().next().unwrap(), "delta,eps,estimator,mean,se,predicted,abs_err");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert!(json["passed"].is_boolean());
    assert_eq!(json["cells"].as_array().unwrap().len(), 18);
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["acceptance.toml", "two_price.toml", "sweep.toml"] {
        let c = RunConfig::load(&configs().join(name)).unwrap();
        c.validated().unwrap();
        let text = c.to_toml();
        let again = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c, again, "{name}");
        assert_eq!(text, again.to_toml(), "{name}");
    }
}

#[test]
fn verify_passes_on_the_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify");
    assert_eq!(run(args("verify", &configs().join("acceptance.toml"), &out, &[])), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verification.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["acceptance"].as_array().unwrap().len(), 10);
}

/// Debiased estimator with the correction coefficient doubled.
fn corrupted_known(agg: &AggregatedSales, eps: f64) -> Result<Estimate> {
    let n = agg.same_days();
    let q = agg.design().probs();
    let (delta1, delta2) = (n[1] - n[2], n[0] - n[1]);
    let value = (delta1 - 2.0 * q[2] / q[1] * (delta2 - delta1)) / eps;
    Ok(Estimate { value, delta1: Some(delta1), delta2: Some(delta2) })
}

#[test]
fn verify_detects_a_corrupted_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::load(&configs().join("acceptance.toml")).unwrap();
    config.run.out = dir.path().to_path_buf();
    let suite = EstimatorSuite { three_price_known: corrupted_known, ..EstimatorSuite::default() };
    let report = cmd_verify_with(&config, &suite).unwrap();
    assert!(!report.passed);
    let failed: Vec<usize> = report.acceptance.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.contains(&3), "{failed:?}");
}
