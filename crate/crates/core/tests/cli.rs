use std::fs;
use std::path::Path;
use std::process::Command;

fn dynres(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dynres"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const CONFIG: &str = "\
capacity = 8
mix = 0.5, 0.3, 0.2
grid.values = 4, 12
schemes = dynamic, non_priority
sim.arrivals = 2000
sim.seeds = 1, 2
";

#[test]
fn analytic_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "sweep.conf", CONFIG);
    let out = dir.path().join("out.csv");
    let result = dynres(&["analytic", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0), "{}", String::from_utf8_lossy(&result.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 4);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "");
    assert_eq!(row[8], "light");
}

#[test]
fn simulate_fills_sim_columns_and_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "sweep.conf", CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let result = dynres(&[
            "simulate",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert_eq!(result.status.code(), Some(0));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[4].is_empty() && !row[5].is_empty() && !row[7].is_empty());
}

#[test]
fn sweep_uses_configured_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config.csv");
    let text = format!("{CONFIG}output = {}\n", out.display());
    let config = write(dir.path(), "sweep.conf", &text);
    let result = dynres(&["sweep", "--config", &config]);
    assert_eq!(result.status.code(), Some(0));
    assert!(out.exists());
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.conf", "capacity = 8\nmix = 0.5, 0.3, 0.3\n");
    let out = dir.path().join("out.csv");
    let result = dynres(&["sweep", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");

    let missing = dir.path().join("nope.conf");
    let result = dynres(&["sweep", "--config", missing.to_str().unwrap(), "--out", "x.csv"]);
    assert_eq!(result.status.code(), Some(1));

    let good = write(dir.path(), "good.conf", CONFIG);
    let result = dynres(&["sweep", "--config", &good]);
    assert_eq!(result.status.code(), Some(1), "no output path");

    let result = dynres(&["sweep", "--bogus"]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn write_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "sweep.conf", CONFIG);
    let out = dir.path().join("missing-dir").join("out.csv");
    let result = dynres(&["analytic", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}
