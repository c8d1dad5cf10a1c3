use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(dir: &Path, config: &str, extra: &[&str]) -> i32 {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_pairloss"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .status()
        .unwrap();
    status.code().unwrap()
}

fn envelope(dir: &Path, stem: &str) -> Value {
    let text = std::fs::read_to_string(dir.join("out").join(format!("{stem}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

const STEADY: &str = r#"
task = "steady"
[params]
pair_loss = 1e-2
omega = 3e-3
kappa = 1e-2
[trunc]
cutoff = 6
"#;

#[test]
fn steady_run_writes_envelope() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), STEADY, &["--workers", "1"]), 0);
    let env = envelope(dir.path(), "result");
    assert_eq!(env["task"], "steady");
    let n = env["outputs"]["mean_photon_number"].as_f64().unwrap();
    assert!(n > 0.0 && n < 1.0, "{n}");
    assert!(env["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn outputs_are_deterministic() {
    let config = format!("{STEADY}\n[output]\nstem = \"pop\"\n").replace("\"steady\"", "\"populations\"");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path(), &config, &["--workers", "1"]), 0);
    assert_eq!(run(b.path(), &config, &["--workers", "2"]), 0);
    let csv = |d: &Path| std::fs::read_to_string(d.join("out/pop_populations.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    let mut ea = envelope(a.path(), "pop");
    let mut eb = envelope(b.path(), "pop");
    ea["wall_time_s"] = Value::Null;
    eb["wall_time_s"] = Value::Null;
    assert_eq!(ea, eb);
    assert!(a.path().join("out/plot_pop.py").exists());
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "task = \"steady\"\n[params]\nkappa = -1.0\n[trunc]\ncutoff = 3\n", &[]), 2);
    assert_eq!(run(dir.path(), "task = \"bogus\"\n", &[]), 2);
    assert_eq!(run(dir.path(), "not toml at all [", &[]), 2);
    let empty = "task = \"sweep\"\n[params]\nomega = 1e-3\nkappa = 1e-2\n[trunc]\ncutoff = 3\n[sweep]\naxis = \"gamma\"\nvalues = []\n";
    assert_eq!(run(dir.path(), empty, &[]), 2);
    assert_eq!(run(dir.path(), STEADY, &["--tolerance", "-1"]), 2);
}

#[test]
fn missing_config_exits_2() {
    let status = Command::new(env!("CARGO_BIN_EXE_pairloss"))
        .args(["--config", "/nonexistent/run.toml"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn degenerate_generator_exits_3() {
    // no cavity loss: every single-axis Fock state is stationary
    let dir = tempfile::tempdir().unwrap();
    let cfg = "task = \"steady\"\n[params]\npair_loss = 1e-2\nkappa = 0.0\n[trunc]\ncutoff = 3\n";
    assert_eq!(run(dir.path(), cfg, &[]), 3);
}

#[test]
fn strict_cutoff_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "task = \"steady\"\n[params]\npair_loss = 1e-2\nomega = 2e-2\nkappa = 1e-2\n[trunc]\ncutoff = 3\n";
    assert_eq!(run(dir.path(), cfg, &[]), 0);
    assert_eq!(run(dir.path(), cfg, &["--strict-cutoff"]), 4);
}

#[test]
fn one_point_sweep_matches_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let single = STEADY.replace("\"steady\"", "\"duan\"");
    assert_eq!(run(dir.path(), &single, &[]), 0);
    let duan = envelope(dir.path(), "result")["outputs"]["duan"]["variance"].as_f64().unwrap();

    let sweep = STEADY.replace("\"steady\"", "\"sweep\"").replace("pair_loss = 1e-2\n", "")
        + "[sweep]\naxis = \"gamma\"\nvalues = [1e-2]\n";
    assert_eq!(run(dir.path(), &sweep, &[]), 0);
    let env = envelope(dir.path(), "result");
    let row = &env["outputs"]["rows"][0];
    assert_eq!(row["status"], "ok");
    assert!((row["duan_variance"].as_f64().unwrap() - duan).abs() < 1e-10);
    let csv = std::fs::read_to_string(dir.path().join("out/result_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
