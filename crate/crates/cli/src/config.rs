//! Configuration-file ingestion: a flat TOML key-value document using the
//! short parameter names (K, M, L, T, mu, mu1, r, m, xi, B_max, ...).
//! Unspecified keys fall back to the default operating point; unknown keys
//! are rejected. A file containing a sweep axis describes a sweep.

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use fedaloha_core::energy::dbm_to_watts;
use fedaloha_core::{ConfigError, SimConfig, StrategyKind};

/// A parsed configuration file: either a single run or a sweep.
#[derive(Debug, Clone)]
pub enum Parsed {
    Run(SimConfig),
    Sweep(SweepSpec),
}

/// The quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// The iteration count is the axis itself; `values` optionally lists
    /// checkpoint iterations to emit (all of them when empty).
    Iterations,
    /// Mean energy income m, in units per iteration.
    MeanIncome,
    /// Number of users K.
    Users,
    /// Target residual as a fraction of B_max.
    Threshold,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Iterations => "iterations",
            SweepAxis::MeanIncome => "mean-income",
            SweepAxis::Users => "users",
            SweepAxis::Threshold => "threshold",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iterations" => Ok(SweepAxis::Iterations),
            "mean-income" | "mean_income" | "m" => Ok(SweepAxis::MeanIncome),
            "users" | "k" => Ok(SweepAxis::Users),
            "threshold" | "xi" => Ok(SweepAxis::Threshold),
            other => Err(ConfigError::new(
                "axis",
                format!("unknown axis '{other}' (expected iterations, mean-income, users, or threshold)"),
            )),
        }
    }
}

/// A resolved sweep: run every listed strategy at every axis value.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub strategies: Vec<StrategyKind>,
    pub base: SimConfig,
}

impl SweepSpec {
    /// The configuration of one sweep point.
    pub fn point(&self, value: f64, strategy: StrategyKind) -> Result<SimConfig, ConfigError> {
        let mut cfg = self.base.clone();
        cfg.strategy = strategy;
        match self.axis {
            SweepAxis::Iterations => {}
            SweepAxis::MeanIncome => cfg.income_mean = value,
            SweepAxis::Users => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(ConfigError::new(
                        "values",
                        format!("user counts must be positive integers, got {value}"),
                    ));
                }
                cfg.users = value as usize;
            }
            SweepAxis::Threshold => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(ConfigError::new(
                        "values",
                        format!("threshold values are fractions of B_max in (0, 1), got {value}"),
                    ));
                }
                cfg.xi = value * cfg.b_max;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Iterations at which rows are emitted.
    pub fn checkpoints(&self) -> Vec<u64> {
        if self.axis == SweepAxis::Iterations && !self.values.is_empty() {
            self.values.iter().map(|&v| v as u64).collect()
        } else {
            (1..=self.base.iterations).collect()
        }
    }
}

/// Every key a configuration file may contain.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    // learning / network
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "M")]
    m_channels: Option<usize>,
    #[serde(rename = "L")]
    l: Option<usize>,
    #[serde(rename = "T")]
    t: Option<u64>,
    mu: Option<f64>,
    mu1: Option<f64>,
    beta: Option<f64>,
    // energy
    xi: Option<f64>,
    #[serde(rename = "B_max")]
    b_max: Option<f64>,
    r: Option<f64>,
    m: Option<f64>,
    // run control
    strategy: Option<String>,
    replications: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
    // hardware
    #[serde(rename = "W")]
    w_flops: Option<f64>,
    #[serde(rename = "C")]
    c_flops: Option<f64>,
    f_clk: Option<f64>,
    psi: Option<f64>,
    #[serde(rename = "P_tx")]
    p_tx_w: Option<f64>,
    #[serde(rename = "P_tx_dbm")]
    p_tx_dbm: Option<f64>,
    eta: Option<f64>,
    #[serde(rename = "P_circ")]
    p_circ: Option<f64>,
    #[serde(rename = "P_rx")]
    p_rx: Option<f64>,
    #[serde(rename = "R_tx")]
    r_tx: Option<f64>,
    #[serde(rename = "R_rx")]
    r_rx: Option<f64>,
    #[serde(rename = "N_up")]
    n_up: Option<f64>,
    #[serde(rename = "N_down")]
    n_down: Option<f64>,
    dataset_size: Option<usize>,
    // modes
    redraw_dataset: Option<bool>,
    renormalize_weights: Option<bool>,
    unconstrained_energy: Option<bool>,
    record_flows: Option<bool>,
    // sweep
    axis: Option<String>,
    values: Option<Vec<f64>>,
    strategies: Option<Vec<String>>,
}

impl RawConfig {
    fn resolve(self) -> Result<Parsed, ConfigError> {
        let defaults = SimConfig::defaults();
        let model_dim = self.l.unwrap_or(defaults.model_dim);
        if model_dim == 0 {
            return Err(ConfigError::new("L", "model dimension must be at least 1"));
        }

        let mut hardware = fedaloha_core::HardwareProfile::ble_defaults(model_dim);
        if let Some(v) = self.w_flops {
            hardware.flops_per_sample = v;
        }
        if let Some(v) = self.c_flops {
            hardware.flops_per_cycle = v;
        }
        if let Some(v) = self.f_clk {
            hardware.clock_hz = v;
        }
        if let Some(v) = self.psi {
            hardware.capacitance = v;
        }
        match (self.p_tx_w, self.p_tx_dbm) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "P_tx",
                    "specify either P_tx (watts) or P_tx_dbm, not both",
                ))
            }
            (Some(w), None) => hardware.tx_power_w = w,
            (None, Some(dbm)) => hardware.tx_power_w = dbm_to_watts(dbm),
            (None, None) => {}
        }
        if let Some(v) = self.eta {
            hardware.pa_efficiency = v;
        }
        if let Some(v) = self.p_circ {
            hardware.circuit_power_w = v;
        }
        if let Some(v) = self.p_rx {
            hardware.rx_power_w = v;
        }
        if let Some(v) = self.r_tx {
            hardware.tx_rate_bps = v;
        }
        if let Some(v) = self.r_rx {
            hardware.rx_rate_bps = v;
        }
        if let Some(v) = self.n_up {
            hardware.uplink_bits = v;
        }
        if let Some(v) = self.n_down {
            hardware.downlink_bits = v;
        }
        if let Some(v) = self.dataset_size {
            hardware.dataset_size = v;
        }

        let b_max = self.b_max.unwrap_or(defaults.b_max);
        let strategy = match &self.strategy {
            Some(s) => s.parse::<StrategyKind>()?,
            None => defaults.strategy,
        };
        let cfg = SimConfig {
            users: self.k.unwrap_or(defaults.users),
            channels: self.m_channels.unwrap_or(defaults.channels),
            model_dim,
            iterations: self.t.unwrap_or(defaults.iterations),
            mu: self.mu.unwrap_or(defaults.mu),
            mu1: self.mu1.unwrap_or(defaults.mu1),
            beta: self.beta.unwrap_or(defaults.beta),
            xi: self.xi.unwrap_or(0.4 * b_max),
            b_max,
            income_rate: self.r.unwrap_or(defaults.income_rate),
            income_mean: self.m.unwrap_or(defaults.income_mean),
            strategy,
            replications: self.replications.unwrap_or(defaults.replications),
            master_seed: self.seed.unwrap_or(defaults.master_seed),
            alpha_override: self.alpha,
            hardware,
            redraw_dataset: self.redraw_dataset.unwrap_or(false),
            renormalize_weights: self
                .renormalize_weights
                .unwrap_or(defaults.renormalize_weights),
            unconstrained_energy: self.unconstrained_energy.unwrap_or(false),
            record_flows: self.record_flows.unwrap_or(false),
        };
        cfg.validate()?;

        let is_sweep = self.axis.is_some() || self.values.is_some() || self.strategies.is_some();
        if !is_sweep {
            return Ok(Parsed::Run(cfg));
        }
        let axis: SweepAxis = self
            .axis
            .as_deref()
            .ok_or_else(|| ConfigError::new("axis", "sweep files must name an axis"))?
            .parse()?;
        let values = self.values.unwrap_or_default();
        if values.is_empty() && axis != SweepAxis::Iterations {
            return Err(ConfigError::new("values", "need at least one axis value"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::new("values", "must be strictly increasing"));
        }
        if axis == SweepAxis::Iterations {
            for &v in &values {
                if v < 1.0 || v.fract() != 0.0 || v as u64 > cfg.iterations {
                    return Err(ConfigError::new(
                        "values",
                        format!("iteration checkpoints must be integers in [1, T], got {v}"),
                    ));
                }
            }
        }
        let strategies = match self.strategies {
            Some(names) if !names.is_empty() => names
                .iter()
                .map(|s| s.parse::<StrategyKind>())
                .collect::<Result<Vec<_>, _>>()?,
            _ => vec![cfg.strategy],
        };
        let spec = SweepSpec {
            axis,
            values,
            strategies,
            base: cfg,
        };
        // fail early if any sweep point is invalid
        for &v in spec.point_values() {
            for &s in &spec.strategies {
                spec.point(v, s)?;
            }
        }
        Ok(Parsed::Sweep(spec))
    }
}

impl SweepSpec {
    /// The axis values enumerated by the sweep. The iterations axis has a
    /// single point (the trace itself is the axis).
    pub fn point_values(&self) -> &[f64] {
        if self.axis == SweepAxis::Iterations {
            &[0.0]
        } else {
            &self.values
        }
    }
}

/// Parse a configuration document. An empty document yields the default
/// operating point.
pub fn parse_config(text: &str) -> Result<Parsed, ConfigError> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
    raw.resolve()
}

/// Parse a configuration file; `None` means no file, i.e. all defaults.
pub fn parse_config_file(path: Option<&Path>) -> anyhow::Result<Parsed> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| anyhow::anyhow!("cannot read config file {}: {e}", p.display()))?,
        None => String::new(),
    };
    Ok(parse_config(&text)?)
}
