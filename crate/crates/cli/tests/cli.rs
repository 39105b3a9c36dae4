//! End-to-end checks of the binary: exit codes, output determinism, CSV
//! schema, and metadata round-tripping.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedaloha"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fedaloha-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &std::path::Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn rerun_is_byte_identical() {
    let dir = scratch("determinism");
    let cfg = write_config(
        &dir,
        "cfg.toml",
        "K = 30\nM = 5\nT = 40\nreplications = 3\n",
    );
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    let a = fs::read(out_a.join("results.csv")).unwrap();
    let b = fs::read(out_b.join("results.csv")).unwrap();
    assert_eq!(a, b, "reruns produced different CSV bytes");
    assert!(!a.is_empty());
}

#[test]
fn csv_schema_is_stable() {
    let dir = scratch("schema");
    let cfg = write_config(&dir, "cfg.toml", "K = 20\nM = 4\nT = 5\nreplications = 2\n");
    let out = dir.join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "axis,strategy,t,battery_norm_mean,battery_norm_std,error_mean,error_std,engaged_mean,engaged_std,attempted_mean,attempted_std,successes_mean,successes_std,lambda_mean,lambda_std,alpha"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5, "one row per iteration");
    for row in rows {
        assert_eq!(row.split(',').count(), 16);
        // locale-independent numerics: no thousands separators, decimal points only
        assert!(!row.contains(' '));
    }
}

#[test]
fn sweep_emits_one_row_group_per_value_and_strategy() {
    let dir = scratch("sweep");
    let cfg = write_config(
        &dir,
        "sweep.toml",
        "K = 20\nM = 4\nT = 3\nreplications = 2\naxis = \"threshold\"\nvalues = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]\nstrategies = [\"edk-ac\", \"emk-ac\", \"lun\"]\n",
    );
    let out = dir.join("out");
    run_ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut groups = std::collections::BTreeSet::new();
    for line in csv.lines().skip(1) {
        let mut cols = line.split(',');
        let axis = cols.next().unwrap().to_string();
        let strategy = cols.next().unwrap().to_string();
        groups.insert((axis, strategy));
    }
    assert_eq!(groups.len(), 27, "9 thresholds x 3 strategies");
    assert_eq!(csv.lines().count() - 1, 27 * 3, "T rows per group");
}

#[test]
fn iterations_sweep_emits_checkpoint_traces_per_strategy() {
    let dir = scratch("iter-sweep");
    let cfg = write_config(
        &dir,
        "sweep.toml",
        "K = 20\nM = 4\nT = 6\nreplications = 2\naxis = \"iterations\"\nvalues = [2, 4, 6]\nstrategies = [\"emk-ac\", \"lun\"]\n",
    );
    let out = dir.join("out");
    run_ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 2, "three checkpoints per strategy");
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        // the iteration is the axis
        assert_eq!(cols[0], cols[2]);
        assert!(["2", "4", "6"].contains(&cols[2]));
    }
}

#[test]
fn metadata_round_trips_as_a_config() {
    let dir = scratch("metadata");
    let cfg = write_config(
        &dir,
        "cfg.toml",
        "K = 25\nM = 5\nT = 4\nreplications = 2\nseed = 9\n",
    );
    let out = dir.join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let meta = out.join("metadata.toml");
    let text = fs::read_to_string(&meta).unwrap();
    assert!(text.contains("seed = 9"));
    // feeding the metadata back as a config reproduces the same results
    let out2 = dir.join("out2");
    run_ok(&[
        "run",
        "--config",
        meta.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(out.join("results.csv")).unwrap(),
        fs::read(out2.join("results.csv")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_trace() {
    let dir = scratch("seed");
    let cfg = write_config(
        &dir,
        "cfg.toml",
        "K = 20\nM = 4\nT = 10\nreplications = 2\n",
    );
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "6",
    ]);
    assert_ne!(
        fs::read(out_a.join("results.csv")).unwrap(),
        fs::read(out_b.join("results.csv")).unwrap()
    );
}

#[test]
fn alpha_prints_a_number() {
    let out = run_ok(&["alpha"]);
    let alpha: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(alpha > 0.0);
}

#[test]
fn configuration_errors_exit_with_code_1() {
    let dir = scratch("errors");
    for bad in [
        "K = 10\nM = 20\n",                       // K < M
        "xi = 0.15\n",                            // xi above B_max
        "unknown_key = 1\n",                      // rejected key
        "strategy = \"bogus\"\n",                 // unknown strategy
        "axis = \"users\"\nvalues = [100, 50]\n", // non-increasing sweep
    ] {
        let cfg = write_config(&dir, "bad.toml", bad);
        let out = bin()
            .args([
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.join("x").to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(1), "config {bad:?} should exit 1");
        assert!(!out.stderr.is_empty());
    }
    // missing file
    let out = bin()
        .args(["run", "--config", "/nonexistent.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn alpha_rejects_strategies_without_sleep() {
    let dir = scratch("alpha-lun");
    let cfg = write_config(&dir, "cfg.toml", "strategy = \"lun\"\n");
    let out = bin()
        .args(["alpha", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_rejects_sweep_files_and_vice_versa() {
    let dir = scratch("mismatch");
    let sweep = write_config(
        &dir,
        "sweep.toml",
        "axis = \"users\"\nvalues = [20, 30]\nM = 4\nT = 2\nreplications = 1\nK = 20\n",
    );
    let out = bin()
        .args([
            "run",
            "--config",
            sweep.to_str().unwrap(),
            "--out",
            dir.join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let run = write_config(&dir, "run.toml", "K = 20\nM = 4\nT = 2\nreplications = 1\n");
    let out = bin()
        .args([
            "sweep",
            "--config",
            run.to_str().unwrap(),
            "--out",
            dir.join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn progress_goes_to_stderr_only() {
    let dir = scratch("stderr");
    let cfg = write_config(&dir, "cfg.toml", "K = 20\nM = 4\nT = 3\nreplications = 1\n");
    let out = run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("o").to_str().unwrap(),
    ]);
    assert!(out.stdout.is_empty(), "stdout must stay clean for piping");
    assert!(!out.stderr.is_empty(), "progress goes to stderr");
}
