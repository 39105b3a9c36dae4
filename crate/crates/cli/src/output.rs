//! Result emission: a schema-stable CSV of per-iteration statistics plus a
//! metadata sidecar holding the fully resolved configuration and seed.
//!
//! One row group per (axis value, strategy); every row carries the axis
//! value, the strategy, the iteration, mean/std of each captured metric
//! across replications, and the resolved alpha. Progress goes to standard
//! error so standard output stays clean.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fedaloha_core::{
    run_experiment, Error, ExperimentResult, IterationStats, SimConfig, StrategyKind,
};

use crate::config::{SweepAxis, SweepSpec};

pub const CSV_HEADER: &str = "axis,strategy,t,battery_norm_mean,battery_norm_std,error_mean,error_std,engaged_mean,engaged_std,attempted_mean,attempted_std,successes_mean,successes_std,lambda_mean,lambda_std,alpha";

fn push_row(
    out: &mut String,
    axis_value: f64,
    strategy: StrategyKind,
    s: &IterationStats,
    alpha: Option<f64>,
) {
    let alpha = alpha.map(|a| a.to_string()).unwrap_or_default();
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        axis_value,
        strategy,
        s.t,
        s.battery_norm.mean,
        s.battery_norm.std,
        s.error.mean,
        s.error.std,
        s.engaged.mean,
        s.engaged.std,
        s.attempted.mean,
        s.attempted.std,
        s.successes.mean,
        s.successes.std,
        s.lambda.mean,
        s.lambda.std,
        alpha
    )
    .expect("writing to a String cannot fail");
}

fn write_outputs(out_dir: &Path, csv: &str, metadata: &str) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| {
        anyhow::anyhow!("cannot create output directory {}: {e}", out_dir.display())
    })?;
    let csv_path = out_dir.join("results.csv");
    fs::write(&csv_path, csv)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", csv_path.display()))?;
    let meta_path = out_dir.join("metadata.toml");
    fs::write(&meta_path, metadata)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", meta_path.display()))?;
    eprintln!("wrote {}", csv_path.display());
    Ok(())
}

fn config_metadata(cfg: &SimConfig) -> anyhow::Result<toml::Table> {
    Ok(toml::Table::try_from(cfg)?)
}

/// Run a single configuration and write its full trace. The iteration count
/// serves as the axis.
pub fn write_run(cfg: &SimConfig, out_dir: &Path) -> anyhow::Result<()> {
    eprintln!(
        "running strategy {} for {} iterations x {} replications",
        cfg.strategy, cfg.iterations, cfg.replications
    );
    let result = run_experiment(cfg)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for s in &result.stats {
        push_row(&mut csv, s.t as f64, cfg.strategy, s, result.alpha);
    }
    let metadata = toml::to_string(&config_metadata(cfg)?)?;
    write_outputs(out_dir, &csv, &metadata)
}

/// Run every (axis value, strategy) combination of a sweep and write one
/// row group per combination.
pub fn write_sweep(spec: &SweepSpec, out_dir: &Path) -> anyhow::Result<()> {
    let checkpoints = spec.checkpoints();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let points = spec.point_values().to_vec();
    let total = points.len() * spec.strategies.len();
    let mut done = 0;
    for &value in &points {
        for &strategy in &spec.strategies {
            let cfg = spec.point(value, strategy).map_err(Error::from)?;
            done += 1;
            eprintln!(
                "[{done}/{total}] {} = {}, strategy {strategy}",
                spec.axis.as_str(),
                if spec.axis == SweepAxis::Iterations {
                    format!("1..{}", cfg.iterations)
                } else {
                    value.to_string()
                }
            );
            let result: ExperimentResult = run_experiment(&cfg)?;
            for &t in &checkpoints {
                let s = result.at(t);
                let axis_value = if spec.axis == SweepAxis::Iterations {
                    t as f64
                } else {
                    value
                };
                push_row(&mut csv, axis_value, strategy, s, result.alpha);
            }
        }
    }
    let mut metadata = config_metadata(&spec.base)?;
    metadata.insert("axis".into(), spec.axis.as_str().into());
    metadata.insert(
        "values".into(),
        toml::Value::Array(spec.values.iter().map(|&v| v.into()).collect()),
    );
    metadata.insert(
        "strategies".into(),
        toml::Value::Array(spec.strategies.iter().map(|s| s.as_str().into()).collect()),
    );
    write_outputs(out_dir, &csv, &toml::to_string(&metadata)?)
}
