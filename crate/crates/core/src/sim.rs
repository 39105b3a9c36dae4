//! Orchestration of the four-step training iteration across K devices and T
//! iterations, with seeded replications and full metric capture.
//!
//! Each iteration runs, in order:
//!   1. every device harvests energy (clamped to its battery capacity);
//!   2. devices decide whether to engage; the engaged pay the computation +
//!      reception cost, receive the current global model, and compute their
//!      local update;
//!   3. engaged devices decide whether to transmit; transmitters pay the
//!      transmit cost and contend on the random-access channels;
//!   4. the base station aggregates the successfully received updates,
//!      updates the feedback signal from the attempted-transmission count,
//!      and broadcasts the new model (visible to devices at the next
//!      iteration).
//!
//! Sleeping devices receive nothing, so the model copy they hold goes stale;
//! the population error metric averages over those stale copies.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{Battery, EhProcess, EnergyProfile, HardwareProfile};
use crate::error::{ConfigError, SimError};
use crate::mac::contend;
use crate::model::{
    aggregate, distance, draw_centers, draw_sample, draw_true_weights, local_gradient, GlobalModel,
    LocalUpdate, Sample,
};
use crate::policy::{alpha_edk_exact, alpha_emk, FeedbackState, Strategy, StrategyKind};
use crate::rng::{substream, SimRng, StreamKind};

/// Any failure the simulator can produce.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Full experiment configuration. Serializes flat, with the short parameter
/// names used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of users K.
    #[serde(rename = "K")]
    pub users: usize,
    /// Number of orthogonal channels M.
    #[serde(rename = "M")]
    pub channels: usize,
    /// Model dimension L.
    #[serde(rename = "L")]
    pub model_dim: usize,
    /// Number of training iterations T.
    #[serde(rename = "T")]
    pub iterations: u64,
    /// Learning rate mu.
    pub mu: f64,
    /// Feedback step size mu_1.
    pub mu1: f64,
    /// Variance of the per-user feature centers (non-IID degree).
    pub beta: f64,
    /// Target residual battery level, in joules.
    pub xi: f64,
    /// Battery capacity, in joules.
    #[serde(rename = "B_max")]
    pub b_max: f64,
    /// Energy-arrival rate r, per iteration.
    #[serde(rename = "r")]
    pub income_rate: f64,
    /// Mean energy income m, in units per iteration.
    #[serde(rename = "m")]
    pub income_mean: f64,
    /// Participation strategy.
    pub strategy: StrategyKind,
    /// Independent replications to average over.
    pub replications: usize,
    /// Master seed from which every substream is derived.
    #[serde(rename = "seed")]
    pub master_seed: u64,
    /// Use this alpha instead of computing it from the income statistics.
    #[serde(rename = "alpha", skip_serializing_if = "Option::is_none", default)]
    pub alpha_override: Option<f64>,
    /// Device hardware parameters.
    #[serde(flatten)]
    pub hardware: HardwareProfile,
    /// Redraw every feature vector each iteration (centers stay fixed).
    #[serde(default)]
    pub redraw_dataset: bool,
    /// Weight received updates by 1/(number received) instead of the static
    /// 1/K of the plain aggregation rule.
    #[serde(default)]
    pub renormalize_weights: bool,
    /// Test mode: batteries pinned at capacity, all costs zero. Only valid
    /// for strategies without a sleep mechanism.
    #[serde(default)]
    pub unconstrained_energy: bool,
    /// Record per-device energy flows for ledger reconstruction.
    #[serde(default)]
    pub record_flows: bool,
}

impl SimConfig {
    /// The default operating point: K=100, M=10, L=10, mu=0.01, mu1=0.1,
    /// r=0.02, m=0.2, B_max=0.1 J, xi=0.4 B_max, BLE-class hardware.
    ///
    /// Received updates are weighted 1/(number received) by default; the
    /// static 1/K weighting is available via `renormalize_weights = false`
    /// but leaves the effective step so small that sleeping and baseline
    /// strategies become indistinguishable on the error metric.
    pub fn defaults() -> Self {
        let model_dim = 10;
        SimConfig {
            users: 100,
            channels: 10,
            model_dim,
            iterations: 1000,
            mu: 0.01,
            mu1: 0.1,
            beta: 1.0,
            xi: 0.04,
            b_max: 0.1,
            income_rate: 0.02,
            income_mean: 0.2,
            strategy: StrategyKind::EmkAc,
            replications: 50,
            master_seed: 1,
            alpha_override: None,
            hardware: HardwareProfile::ble_defaults(model_dim),
            redraw_dataset: false,
            renormalize_weights: true,
            unconstrained_energy: false,
            record_flows: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.users == 0 {
            return Err(ConfigError::new("K", "need at least one user"));
        }
        if self.channels == 0 {
            return Err(ConfigError::new("M", "need at least one channel"));
        }
        if self.users < self.channels {
            return Err(ConfigError::new(
                "K",
                format!("K ({}) must be at least M ({})", self.users, self.channels),
            ));
        }
        if self.model_dim == 0 {
            return Err(ConfigError::new("L", "model dimension must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(ConfigError::new("T", "need at least one iteration"));
        }
        if self.replications == 0 {
            return Err(ConfigError::new(
                "replications",
                "need at least one replication",
            ));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ConfigError::new("mu", "learning rate must be positive"));
        }
        if !(self.mu1 > 0.0 && self.mu1.is_finite()) {
            return Err(ConfigError::new("mu1", "feedback step must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ConfigError::new("beta", "must be finite and nonnegative"));
        }
        if !(self.b_max > 0.0 && self.b_max.is_finite()) {
            return Err(ConfigError::new(
                "B_max",
                "battery capacity must be positive",
            ));
        }
        if !(self.xi > 0.0 && self.xi < self.b_max) {
            return Err(ConfigError::new(
                "xi",
                format!(
                    "target residual must lie strictly between 0 and B_max, got {} with B_max {}",
                    self.xi, self.b_max
                ),
            ));
        }
        if !(self.income_rate > 0.0 && self.income_rate <= 500.0) {
            return Err(ConfigError::new(
                "r",
                format!(
                    "arrival rate must lie in (0, 500] per iteration, got {}",
                    self.income_rate
                ),
            ));
        }
        if !(self.income_mean > 0.0 && self.income_mean.is_finite()) {
            return Err(ConfigError::new("m", "mean income must be positive"));
        }
        if let Some(alpha) = self.alpha_override {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(ConfigError::new(
                    "alpha",
                    "override must be finite and nonnegative",
                ));
            }
        }
        if self.unconstrained_energy && self.strategy.uses_sleep() {
            return Err(ConfigError::new(
                "unconstrained_energy",
                "test mode is only meaningful for strategies without a sleep mechanism",
            ));
        }
        self.hardware.validate()
    }

    /// Derived per-iteration energy costs.
    pub fn energy_profile(&self) -> EnergyProfile {
        if self.unconstrained_energy {
            EnergyProfile {
                e_cmp: 0.0,
                e_tx: 0.0,
                e_rx: 0.0,
                unit: EnergyProfile::from_hardware(&self.hardware).unit,
            }
        } else {
            EnergyProfile::from_hardware(&self.hardware)
        }
    }

    /// The alpha the base station broadcasts for this configuration, when
    /// the strategy has a sleep mechanism.
    pub fn resolve_alpha(&self) -> Result<Option<f64>, ConfigError> {
        if !self.strategy.uses_sleep() {
            return Ok(None);
        }
        if let Some(alpha) = self.alpha_override {
            return Ok(Some(alpha));
        }
        let ep = self.energy_profile();
        let alpha = if self.strategy.uses_income_distribution() {
            alpha_edk_exact(
                self.income_rate,
                self.income_mean,
                ep.unit,
                self.xi,
                self.b_max,
                self.channels,
                self.users,
                &ep,
            )?
        } else {
            alpha_emk(
                self.income_mean * ep.unit,
                self.xi,
                self.b_max,
                self.channels,
                self.users,
                &ep,
            )?
        };
        Ok(Some(alpha))
    }
}

/// One device of the network.
#[derive(Debug, Clone)]
struct Device {
    index: usize,
    battery: Battery,
    center: Vec<f64>,
    sample: Sample,
    /// Last global model this device received; stale while it sleeps.
    last_model: Vec<f64>,
    /// Cached distance of `last_model` to the ground truth.
    dist_to_true: f64,
    eh: EhProcess,
    energy: EnergyProfile,
    income_rng: SimRng,
    engage_rng: SimRng,
    tx_rng: SimRng,
}

/// Energy movements of one device in one iteration, for exact ledger replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    pub t: u64,
    pub device: usize,
    /// Income actually stored (after the capacity clamp).
    pub credited: f64,
    /// Computation + reception debit, 0 if the device slept.
    pub engage_cost: f64,
    /// Transmission debit, 0 if the device withheld.
    pub tx_cost: f64,
}

/// Metrics captured at the end of each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u64,
    /// Mean battery level over all devices, normalized by B_max.
    pub mean_battery_norm: f64,
    /// Mean distance of the per-device model copies to the ground truth.
    pub error: f64,
    pub engaged: u32,
    /// Attempted transmissions (the base station's K_hat).
    pub attempted: u32,
    pub successes: u32,
    /// Feedback signal after this iteration's update.
    pub lambda: f64,
}

/// Live state of one replication.
pub struct RunState {
    cfg: SimConfig,
    strategy: Strategy,
    energy: EnergyProfile,
    devices: Vec<Device>,
    model: GlobalModel,
    feedback: FeedbackState,
    channel_rng: SimRng,
    dataset_rng: SimRng,
    /// Static aggregation weights d_k = 1/K.
    weights: Vec<f64>,
    t: u64,
    initial_levels: Vec<f64>,
    flows: Vec<FlowRecord>,
}

impl RunState {
    /// Build the state of one replication: population, batteries, income
    /// streams, resolved alpha, and zeroed feedback.
    pub fn init(cfg: &SimConfig, replication: usize) -> Result<Self, Error> {
        cfg.validate()?;
        let energy = cfg.energy_profile();
        let alpha = cfg.resolve_alpha()?;
        let strategy = Strategy {
            kind: cfg.strategy,
            alpha,
            xi: cfg.strategy.uses_sleep().then_some(cfg.xi),
        };
        let rep = replication as u64;
        let seed = cfg.master_seed;

        let mut dataset_rng = substream(seed, rep, StreamKind::Dataset, 0);
        let true_w = draw_true_weights(cfg.model_dim, &mut dataset_rng);
        let centers = draw_centers(cfg.users, cfg.model_dim, cfg.beta, &mut dataset_rng);
        let w0 = vec![0.0; cfg.model_dim];
        let initial_dist = distance(&w0, &true_w);

        let mut battery_rng = substream(seed, rep, StreamKind::InitialBattery, 0);
        let mut devices = Vec::with_capacity(cfg.users);
        for (k, center) in centers.into_iter().enumerate() {
            let sample = draw_sample(&center, &true_w, k, &mut dataset_rng);
            let level = if cfg.unconstrained_energy {
                cfg.b_max
            } else {
                battery_rng.random::<f64>() * cfg.b_max
            };
            let battery = Battery::new(level, cfg.b_max)?;
            let mut income_rng = substream(seed, rep, StreamKind::Income, k as u64);
            let eh = EhProcess::new(
                cfg.income_rate,
                cfg.income_mean,
                energy.unit,
                &mut income_rng,
            )?;
            devices.push(Device {
                index: k,
                battery,
                center,
                sample,
                last_model: w0.clone(),
                dist_to_true: initial_dist,
                eh,
                energy,
                income_rng,
                engage_rng: substream(seed, rep, StreamKind::Engagement, k as u64),
                tx_rng: substream(seed, rep, StreamKind::Transmission, k as u64),
            });
        }
        let initial_levels = devices.iter().map(|d| d.battery.level()).collect();
        Ok(RunState {
            strategy,
            energy,
            devices,
            model: GlobalModel { w: w0, true_w },
            feedback: FeedbackState::new(cfg.mu1, cfg.channels),
            channel_rng: substream(seed, rep, StreamKind::Channel, 0),
            dataset_rng,
            weights: vec![1.0 / cfg.users as f64; cfg.users],
            t: 0,
            initial_levels,
            flows: Vec::new(),
            cfg: cfg.clone(),
        })
    }

    /// Advance one full iteration and return its metrics.
    pub fn step(&mut self) -> Result<IterationRecord, SimError> {
        self.t += 1;
        let t = self.t;
        let unconstrained = self.cfg.unconstrained_energy;
        let mut iter_flows: Vec<FlowRecord> = if self.cfg.record_flows {
            Vec::with_capacity(self.devices.len())
        } else {
            Vec::new()
        };

        // (1) harvest
        for d in &mut self.devices {
            let credited = if unconstrained {
                0.0
            } else {
                let income = d.eh.sample_income(&mut d.income_rng);
                d.battery.credit(income)
            };
            if self.cfg.record_flows {
                iter_flows.push(FlowRecord {
                    t,
                    device: d.index,
                    credited,
                    engage_cost: 0.0,
                    tx_cost: 0.0,
                });
            }
        }

        if self.cfg.redraw_dataset {
            for d in &mut self.devices {
                d.sample = draw_sample(
                    &d.center,
                    &self.model.true_w,
                    d.index,
                    &mut self.dataset_rng,
                );
            }
        }

        // (2) engagement: receive w(t), pay the computation cost, compute
        // the local update
        let w_t = self.model.w.clone();
        let dist_w_t = distance(&w_t, &self.model.true_w);
        let mut updates: Vec<LocalUpdate> = Vec::new();
        for (i, d) in self.devices.iter_mut().enumerate() {
            if !self
                .strategy
                .decide_engagement(&d.battery, &d.energy, &mut d.engage_rng)
            {
                continue;
            }
            if !unconstrained {
                d.battery.debit(d.energy.engage_cost(), d.index, t)?;
            }
            if self.cfg.record_flows {
                iter_flows[i].engage_cost = d.energy.engage_cost();
            }
            d.last_model.copy_from_slice(&w_t);
            d.dist_to_true = dist_w_t;
            updates.push(local_gradient(&w_t, &d.sample));
        }
        let engaged = updates.len() as u32;

        // (3) transmission decisions
        let mut transmitters: Vec<usize> = Vec::new();
        for u in &updates {
            let d = &mut self.devices[u.owner];
            let tx = self.strategy.decide_transmission(
                u.norm,
                self.feedback.lambda,
                &d.battery,
                self.cfg.users,
                self.cfg.channels,
                &d.energy,
                &mut d.tx_rng,
            );
            if tx {
                if !unconstrained {
                    d.battery.debit(d.energy.e_tx, d.index, t)?;
                }
                if self.cfg.record_flows {
                    iter_flows[u.owner].tx_cost = d.energy.e_tx;
                }
                transmitters.push(u.owner);
            }
        }

        // (4) contention, aggregation, feedback
        let outcome = contend(&transmitters, self.cfg.channels, &mut self.channel_rng);
        let mut update_of: Vec<Option<usize>> = vec![None; self.cfg.users];
        for (i, u) in updates.iter().enumerate() {
            update_of[u.owner] = Some(i);
        }
        let received: Vec<LocalUpdate> = outcome
            .successes
            .iter()
            .map(|&(user, _)| updates[update_of[user].expect("success without update")].clone())
            .collect();
        if self.cfg.renormalize_weights && !received.is_empty() {
            let w = 1.0 / received.len() as f64;
            let weights = vec![w; self.cfg.users];
            self.model.w = aggregate(&self.model.w, &received, self.cfg.mu, &weights);
        } else {
            self.model.w = aggregate(&self.model.w, &received, self.cfg.mu, &self.weights);
        }
        self.feedback.update_feedback(outcome.attempted);

        if self.cfg.record_flows {
            self.flows.extend(iter_flows);
        }

        let users = self.devices.len() as f64;
        let mean_battery_norm =
            self.devices.iter().map(|d| d.battery.level()).sum::<f64>() / users / self.cfg.b_max;
        let error = self.devices.iter().map(|d| d.dist_to_true).sum::<f64>() / users;
        let record = IterationRecord {
            t,
            mean_battery_norm,
            error,
            engaged,
            attempted: outcome.attempted as u32,
            successes: outcome.successes.len() as u32,
            lambda: self.feedback.lambda,
        };
        debug_assert!(record.engaged >= record.attempted);
        debug_assert!(record.attempted >= record.successes);
        Ok(record)
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn feedback(&self) -> &FeedbackState {
        &self.feedback
    }

    pub fn model(&self) -> &GlobalModel {
        &self.model
    }

    pub fn energy(&self) -> &EnergyProfile {
        &self.energy
    }

    pub fn battery_levels(&self) -> Vec<f64> {
        self.devices.iter().map(|d| d.battery.level()).collect()
    }

    /// Battery levels at initialization, for ledger reconstruction.
    pub fn initial_levels(&self) -> &[f64] {
        &self.initial_levels
    }

    /// Per-device energy flows (populated when `record_flows` is set).
    pub fn flows(&self) -> &[FlowRecord] {
        &self.flows
    }

    /// The model copies currently held by the devices.
    pub fn device_models(&self) -> Vec<Vec<f64>> {
        self.devices.iter().map(|d| d.last_model.clone()).collect()
    }
}

/// Run one full replication and return its trace.
pub fn run_single(cfg: &SimConfig, replication: usize) -> Result<Vec<IterationRecord>, Error> {
    let mut state = RunState::init(cfg, replication)?;
    let mut trace = Vec::with_capacity(cfg.iterations as usize);
    for _ in 0..cfg.iterations {
        trace.push(state.step()?);
    }
    Ok(trace)
}

/// Mean and sample standard deviation of one metric across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn over(values: impl Iterator<Item = f64> + Clone) -> Stat {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let std = if n > 1.0 {
            (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Cross-replication statistics of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub t: u64,
    pub battery_norm: Stat,
    pub error: Stat,
    pub engaged: Stat,
    pub attempted: Stat,
    pub successes: Stat,
    pub lambda: Stat,
}

/// Result of a replicated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// The alpha the base station broadcast, when the strategy uses one.
    pub alpha: Option<f64>,
    /// Per-iteration means and standard deviations across replications.
    pub stats: Vec<IterationStats>,
    /// The raw per-replication traces.
    pub traces: Vec<Vec<IterationRecord>>,
}

impl ExperimentResult {
    /// Statistics at iteration `t` (1-based).
    pub fn at(&self, t: u64) -> &IterationStats {
        &self.stats[(t - 1) as usize]
    }
}

/// Run all replications (in parallel; the result is identical to running
/// them one by one) and aggregate the traces.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentResult, Error> {
    cfg.validate()?;
    let alpha = cfg.resolve_alpha()?;
    let traces: Vec<Vec<IterationRecord>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_single(cfg, rep))
        .collect::<Result<_, _>>()?;
    let stats = (0..cfg.iterations as usize)
        .map(|i| IterationStats {
            t: (i + 1) as u64,
            battery_norm: Stat::over(traces.iter().map(move |tr| tr[i].mean_battery_norm)),
            error: Stat::over(traces.iter().map(move |tr| tr[i].error)),
            engaged: Stat::over(traces.iter().map(move |tr| tr[i].engaged as f64)),
            attempted: Stat::over(traces.iter().map(move |tr| tr[i].attempted as f64)),
            successes: Stat::over(traces.iter().map(move |tr| tr[i].successes as f64)),
            lambda: Stat::over(traces.iter().map(move |tr| tr[i].lambda)),
        })
        .collect();
    Ok(ExperimentResult {
        alpha,
        stats,
        traces,
    })
}
