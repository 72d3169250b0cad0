//! End-to-end checks of the `glmarket` binary: verbs, exit codes and the
//! CSV-vs-summary round-trip invariant.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glmarket"))
}

fn small_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"
[market]
rounds = 40
seed = 1

[experiment]
seeds = [1, 2, 3]
t_ladder = [20, 40, 80, 160]

[lemmas]
coverage_delta = 0.05
coverage_runs = 60
coverage_rounds = 30

[[seller]]
link = "identity-offset"
alpha = 1.0
beta = 1.0
gamma = [0.3]
price_min = 0.0
price_max = 1.0
beta_min = 0.5
beta_max = 1.0
gamma_min = [0.0]
gamma_max = [0.5]

[[seller]]
link = "identity-offset"
alpha = 1.0
beta = 1.0
gamma = [0.3]
price_min = 0.0
price_max = 1.0
beta_min = 0.5
beta_max = 1.0
gamma_min = [0.0]
gamma_max = [0.5]
"#;

#[test]
fn run_produces_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let status = bin()
        .args(["run"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--workers", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "trajectory_seed_1.csv",
        "trajectory_seed_2.csv",
        "trajectory_seed_3.csv",
        "summary.json",
        "lemmas.jsonl",
        "validation.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn missing_file_and_schema_violations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let status = bin()
        .args(["run", "/nonexistent/config.toml", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let bad = small_config(dir.path(), &SMALL.replace("rounds = 40", "rounds = 40\nmystery = 1"));
    let output = bin()
        .args(["run"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&output.stderr);
    assert!(msg.contains("mystery"), "error should name the key: {msg}");
}

#[test]
fn contraction_gate_exits_3_and_names_a5() {
    // ||gamma_1||_1 = 1.1 > beta = 1 breaks the unique-equilibrium gate
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[market]
rounds = 10
seed = 1

[experiment]
seeds = [1]

[[seller]]
link = "identity-offset"
alpha = 2.4
beta = 1.0
gamma = [0.6, 0.5]
price_min = 0.0
price_max = 1.0
beta_min = 0.5
beta_max = 1.0
gamma_min = [-0.7, -0.7]
gamma_max = [0.7, 0.7]

[[seller]]
link = "identity-offset"
alpha = 2.4
beta = 1.0
gamma = [0.1, 0.1]
price_min = 0.0
price_max = 1.0
beta_min = 0.5
beta_max = 1.0
gamma_min = [-0.7, -0.7]
gamma_max = [0.7, 0.7]

[[seller]]
link = "identity-offset"
alpha = 2.4
beta = 1.0
gamma = [0.1, 0.1]
price_min = 0.0
price_max = 1.0
beta_min = 0.5
beta_max = 1.0
gamma_min = [-0.7, -0.7]
gamma_max = [0.7, 0.7]
"#;
    let cfg = small_config(dir.path(), body);
    let out = dir.path().join("out");
    let output = bin()
        .args(["run"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&output.stderr);
    assert!(msg.contains("A5"), "gate message should cite A5: {msg}");

    // --force runs anyway
    let status = bin()
        .args(["run"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--force")
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn validate_verb_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SMALL);
    let output = bin().args(["validate"]).arg(&cfg).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("l_gamma"));
    assert!(text.contains("all assumptions hold"));
}

#[test]
fn csv_metrics_reproduce_summary() {
    use glmarket_cli::config::ExperimentConfig;
    use glmarket_cli::output::{metrics_from_rows, read_summary, read_trajectory_csv};

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let status = bin()
        .args(["run"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let market = cfg.market(None).unwrap();
    let c_mus: Vec<f64> = market.sellers().iter().map(|s| s.link().c_mu()).collect();
    let summary = read_summary(&out.join("summary.json")).unwrap();

    let n = market.n();
    let seeds = cfg.seeds(None);
    let mut regret_sums = vec![0.0; n];
    let mut dist_sum = 0.0;
    let mut potential_sum = 0.0;
    for seed in &seeds {
        let rows = read_trajectory_csv(&out.join(format!("trajectory_seed_{seed}.csv"))).unwrap();
        let m = metrics_from_rows(&rows, n, cfg.policy.lambda, &c_mus);
        for i in 0..n {
            regret_sums[i] += m.regret_total[i];
        }
        dist_sum += m.nash_dist_sum;
        potential_sum += m.potential;
    }
    let k = seeds.len() as f64;
    for i in 0..n {
        assert!(
            (regret_sums[i] / k - summary.regret_mean[i]).abs() < 1e-9,
            "regret mean mismatch for seller {i}"
        );
    }
    assert!((dist_sum / k - summary.nash_dist_sum_mean).abs() < 1e-9);
    assert!((potential_sum / k - summary.k_t_mean).abs() < 1e-9);
}

#[test]
fn scaling_verb_writes_slope() {
    let dir = tempfile::tempdir().unwrap();
    // the study insists on >= 10 seeds per ladder point
    let ten_seeds = SMALL.replace(
        "seeds = [1, 2, 3]",
        "seeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]",
    );
    let cfg = small_config(dir.path(), &ten_seeds);
    let out = dir.path().join("out");
    let output = bin()
        .args(["scaling"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--workers", "2"])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(out.join("scaling.json").exists());
    assert!(out.join("summary.json").exists());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("slope"));
    // the summary written by scaling carries the slope block
    let summary = glmarket_cli::output::read_summary(&out.join("summary.json")).unwrap();
    assert!(summary.slope.is_some());

    // degenerate ladders and thin seed lists are rejected up front
    let dir2 = tempfile::tempdir().unwrap();
    let short = small_config(
        dir2.path(),
        &SMALL.replace("t_ladder = [20, 40, 80, 160]", "t_ladder = [20, 40]"),
    );
    let output = bin()
        .args(["scaling"])
        .arg(&short)
        .arg("--out")
        .arg(dir2.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn lemmas_verb_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let output = bin()
        .args(["lemmas"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--workers", "2"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(out.join("lemmas.jsonl")).unwrap();
    assert!(text.lines().count() >= 5);
    assert!(text.contains("concentration-coverage"));
    for line in text.lines() {
        let rep: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(rep["pass"].as_bool().unwrap(), "failed report: {line}");
    }
}
