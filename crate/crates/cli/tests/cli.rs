use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robustcov"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const GRID: &str = r#"
seed = 3
trials = 10
n = [20, 40, 80]
eta = [0.0, 0.1]
estimators = ["sample_cov"]

[[distributions]]
kind = "gaussian"
dim = 2
"#;

#[test]
fn estimate_with_tiny_lambda_is_sample_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "pm.csv", "1\n-1\n1\n-1\n");
    let o = run(&["estimate", &f, "--p4", "--eta", "0", "--delta", "0.1", "--lambda-override", "1e-9"]);
    assert_eq!(o.status.code(), Some(0));
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-12, "{v}");
}

#[test]
fn missing_file_exits_2() {
    assert_eq!(run(&["estimate", "/nonexistent/x.csv"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "/nonexistent/x.toml"]).status.code(), Some(2));
    assert_eq!(run(&["estimate"]).status.code(), Some(2));
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.csv", "a,b\n1,2\n3\n");
    assert_eq!(run(&["estimate", &f]).status.code(), Some(2));
    let cfg = write(dir.path(), "bad.toml", "seed = 1\n");
    assert_eq!(run(&["simulate", &cfg]).status.code(), Some(2));
}

#[test]
fn pgt4_on_zero_data() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "z.csv", &"0,0\n".repeat(40));
    let o = run(&["estimate", &f, "--pgt4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0,0\n0,0\n");
    assert!(String::from_utf8_lossy(&o.stderr).contains("feasible=false"));
}

#[test]
fn degenerate_sample_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = vec!["0,0"; 600];
    rows[250] = "1,2";
    let f = write(dir.path(), "deg.csv", &(rows.join("\n") + "\n"));
    let o = run(&["estimate", &f, "--p4"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn estimate_is_seed_deterministic_and_respects_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data: String = (0..300).map(|i| format!("{},{}\n", ((i * 37) % 11) as f64 - 5.0, ((i * 13) % 7) as f64 - 3.0)).collect();
    let f = write(dir.path(), "d.csv", &data);
    let a = run(&["estimate", &f, "--seed", "5", "--jitter", "0.01"]);
    let b = run(&["estimate", &f, "--seed", "5", "--jitter", "0.01"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let cfg = write(dir.path(), "e.toml", "seed = 5\njitter = 0.01\n");
    let c = run(&["estimate", &f, "--config", &cfg]);
    assert_eq!(a.stdout, c.stdout);
    let bad = write(dir.path(), "bad.toml", "colour = 1\n");
    assert_eq!(run(&["estimate", &f, "--config", &bad]).status.code(), Some(2));
}

#[test]
fn simulate_counts_rows_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", GRID);
    let a = run(&["simulate", &cfg]);
    let b = run(&["simulate", &cfg]);
    assert_eq!(a.status.code(), Some(0));
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 61);
    assert!(text.starts_with("trial_id,seed,distribution,"));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_plots_one_svg_per_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", &GRID.replace("eta = [0.0, 0.1]", "eta = [0.0, 0.05, 0.1]"));
    let plots = dir.path().join("plots");
    let out = dir.path().join("out.csv");
    let o = run(&["simulate", &cfg, "-o", out.to_str().unwrap(), "--plot", plots.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut names: Vec<String> =
        std::fs::read_dir(&plots).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["error_vs_eta.svg", "error_vs_n.svg"]);
    assert!(std::fs::read_to_string(plots.join("error_vs_n.svg")).unwrap().contains("<polyline"));
}

#[test]
fn simulate_timing_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", &GRID.replace("trials = 10", "trials = 1"));
    let o = run(&["simulate", &cfg, "--timing"]);
    assert!(stdout(&o).lines().next().unwrap().ends_with(",status,wall_ms"));
}

#[test]
fn lowerbound_fourpoint() {
    let o = run(&["lowerbound", "--fourpoint", "--eta", "0.04,0.25"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eta,epsilon,reference,rel_err");
    let f: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert!((f[1] - 0.08).abs() < 1e-12 && (f[2] - 0.08).abs() < 1e-12 && f[3] <= 1e-12);
    assert_eq!(lines.len(), 3);
}

#[test]
fn lowerbound_rejects_eta_above_quarter() {
    let o = run(&["lowerbound", "--fourpoint", "--eta", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1/4"));
}

#[test]
fn lowerbound_from_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "a.csv", "value,prob\n-1,0.5\n1,0.5\n");
    let o = run(&["lowerbound", "--atoms", &f, "--eta", "0.1,0.2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "eta,epsilon,reference,rel_err\n0.1,0,,\n0.2,0,,\n");
}

#[test]
fn diagnose_tables() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "d.csv", "1,0\n0,1\n0.5,0.5\n-2,1\n0,0.1\n1,1\n");
    let o = run(&["diagnose", &f, "--k-max", "2", "--lambda", "0.1,1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,f_brute,f_greedy");
    assert_eq!(lines[1], "1,5,5");
    assert_eq!(lines[3], "");
    assert_eq!(lines[4], "lambda,peaky,spread,total");
    assert_eq!(lines.len(), 7);
    assert_eq!(run(&["diagnose", &f, "--k-max", "9"]).status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let o = bin().args(["lowerbound", "--fourpoint", "--eta", "0.1"]).env("ROBUSTCOV_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
