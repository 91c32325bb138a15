use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const ENV_E1: &str = r#"
[env]
theta0 = 0.0
theta1 = 1.0
h1 = 0.0
h2 = 1.0
c1 = 0.0
c2 = 1.0

[kernel]
kind = "mix_dirac"
lambda = 0.5

[scheme]
id = "e1"
kind = "quadratic"
A = 4.0
B = 0.0
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biasprice"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fields(line: &str) -> Vec<f64> {
    line.split(',').filter_map(|s| s.parse().ok()).collect()
}

#[test]
fn optimize_profit_reports_closed_form_and_oracle() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&[
        "optimize",
        "--objective",
        "profit",
        "--env",
        env.to_str().unwrap(),
        "--oracle",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "A,B,q_star,value,source");
    assert!(lines[1].ends_with("closed_form"));
    assert!(lines[2].ends_with("oracle"));
    let closed = fields(lines[1]);
    let oracle = fields(lines[2]);
    for (got, want) in closed.iter().zip([4.0, 0.0, 1.0 / 3.0, 1.0 / 18.0]) {
        assert!((got - want).abs() < 1e-6, "{closed:?}");
    }
    for (a, b) in closed.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{closed:?} vs {oracle:?}");
    }
}

#[test]
fn optimize_welfare_closed_form() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&[
        "optimize",
        "--objective",
        "welfare",
        "--env",
        env.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let row = fields(stdout(&o).lines().nth(1).unwrap());
    assert!((row[0] - 2.0).abs() < 1e-9, "{row:?}");
    assert!(row[1].abs() < 1e-9);
}

#[test]
fn optimize_rejects_large_bias_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&[
        "optimize",
        "--objective",
        "profit",
        "--env",
        env.to_str().unwrap(),
        "--a1",
        "0.7",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a1 < 2/3"));
    assert!(o.stdout.is_empty());
}

#[test]
fn hypothesis_failure_in_env_exits_one() {
    let dir = TempDir::new().unwrap();
    let env = write(
        dir.path(),
        "bad.toml",
        &ENV_E1.replace("c1 = 0.0", "c1 = 2.0"),
    );
    let o = run(&["optimize", "--env", env.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta1 + h1 - c1 > 0"));
}

#[test]
fn malformed_config_exits_one() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "bad.toml", "[env]\ntheta0 = \"zero\"\n");
    let o = run(&["optimize", "--env", env.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero_and_bad_usage_exits_one() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn figure1_anchor_on_default_grid() {
    let o = run(&["sweep", "--figure1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("a1,p,G\n"));
    assert!(text.lines().any(|l| l == "0.5,1,0.0555555556"), "{text}");
    assert_eq!(text.lines().count(), 1 + 13 * 9);
}

#[test]
fn sweep_is_idempotent_across_runs_and_files() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&[
            "sweep",
            "--a1",
            "0:0.6:4",
            "--p",
            "0:2:3",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let first = fs::read(&a).unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, fs::read(&b).unwrap());
}

#[test]
fn welfare_decomposes_into_profit_and_surplus() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&["welfare", "--env", env.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("e1,"));
    let v = fields(row);
    assert!((v[0] - 1.0 / 18.0).abs() < 1e-8);
    assert!((v[1] - v[0] - v[2]).abs() < 1e-8);
}

#[test]
fn el_check_zero_residual_on_extremal() {
    let dir = TempDir::new().unwrap();
    let env = write(
        dir.path(),
        "e.toml",
        &ENV_E1
            .replace("c1 = 0.0", "c1 = 0.5")
            .replace("A = 4.0", "A = 0.0")
            .replace("B = 0.0", "B = 0.5"),
    );
    let o = run(&[
        "el-check",
        "--beta",
        "0",
        "--scheme",
        env.to_str().unwrap(),
        "--env",
        env.to_str().unwrap(),
        "--points",
        "5",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("q,residual"));
    for line in lines.by_ref().take_while(|l| !l.is_empty()) {
        assert!(fields(line)[1].abs() < 1e-6, "{line}");
    }
    assert_eq!(lines.next(), Some("gap_top,markup_at_top"));
}

#[test]
fn block_compare_writes_lambda_table() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let out = dir.path().join("block.csv");
    let o = run(&[
        "block-compare",
        "--env",
        env.to_str().unwrap(),
        "--p1",
        "0.5",
        "--p2",
        "0.5",
        "--p3",
        "0.8",
        "--qbar",
        "0.2",
        "--lambda-grid",
        "0:1:5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,Q_flat,Q_twotier,dQ,regime"));
    let deltas: Vec<f64> = lines.map(|l| fields(l)[3]).collect();
    assert_eq!(deltas.len(), 5);
    assert!(
        deltas.windows(2).all(|w| w[1] <= w[0] + 1e-12),
        "{deltas:?}"
    );
}

#[test]
fn block_compare_rejects_unordered_rates() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&[
        "block-compare",
        "--env",
        env.to_str().unwrap(),
        "--p1",
        "0.9",
        "--p2",
        "0.5",
        "--p3",
        "0.8",
        "--qbar",
        "0.2",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dynamics_trajectory_reaches_steady_state() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&["dynamics", "--env", env.to_str().unwrap(), "--theta", "0.8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("step,q,drift\n"));
    let last = fields(text.lines().last().unwrap());
    // theta = 2q + q with the perceived slope A(1 - a1) = 2 and h2 = 1.
    assert!((last[1] - 0.8 / 3.0).abs() < 1e-8, "{last:?}");
}

#[test]
fn dynamics_divergence_exits_one_with_trajectory() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&[
        "dynamics",
        "--env",
        env.to_str().unwrap(),
        "--theta",
        "0.8",
        "--max-steps",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().count() > 1);
}

#[test]
fn oracle_disagreement_exits_two() {
    let dir = TempDir::new().unwrap();
    let env = write(dir.path(), "e1.toml", ENV_E1);
    let o = run(&[
        "optimize",
        "--env",
        env.to_str().unwrap(),
        "--oracle",
        "--tol",
        "1e-15",
        "--value-tol",
        "1e-18",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(stdout(&o).lines().count(), 3);
}
