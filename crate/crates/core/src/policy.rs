//! Decision logic: norm-based adaptive transmission control, the
//! battery-proportional sleep rule, and the tuning of its coefficient alpha
//! from the energy-income statistics.
//!
//! The sleep rule p_s = 1 - alpha B/B_max throttles participation so the
//! expected battery level settles at a target residual xi. Taking the
//! stationary expectation of the battery ledger and solving for alpha gives
//!
//!   alpha = (E_h - (M/K) E_tx) * B_max / (xi (E_cmp + E_rx)),
//!
//! where E_h is the expected per-iteration income. The distribution-aware
//! variant (EDK) uses the capacity-truncated mean E[min(zeta, B_max - xi)];
//! the mean-only variant (EMK) uses E[zeta] directly.

use serde::{Deserialize, Serialize};

use crate::energy::{Battery, EhProcess, EnergyProfile};
use crate::error::ConfigError;
use crate::rng::SimRng;
use rand::Rng;

/// Participation strategy variants. `Ac` variants transmit with the
/// norm-based adaptive probability; `NoAc` variants use the uniform
/// probability M/K. LUN and Uniform have no sleep mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    EdkAc,
    EmkAc,
    /// Largest-updates'-norms baseline: always engage (battery permitting),
    /// adaptive transmission control, no sleep mechanism.
    Lun,
    EdkNoAc,
    EmkNoAc,
    UniformNoAc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::EdkAc,
        StrategyKind::EmkAc,
        StrategyKind::Lun,
        StrategyKind::EdkNoAc,
        StrategyKind::EmkNoAc,
        StrategyKind::UniformNoAc,
    ];

    /// Whether transmissions use the adaptive (norm + feedback) rule.
    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            StrategyKind::EdkAc | StrategyKind::EmkAc | StrategyKind::Lun
        )
    }

    /// Whether the battery-proportional sleep rule applies.
    pub fn uses_sleep(self) -> bool {
        matches!(
            self,
            StrategyKind::EdkAc
                | StrategyKind::EmkAc
                | StrategyKind::EdkNoAc
                | StrategyKind::EmkNoAc
        )
    }

    /// Whether alpha is tuned from the full income distribution (EDK) as
    /// opposed to its mean only (EMK).
    pub fn uses_income_distribution(self) -> bool {
        matches!(self, StrategyKind::EdkAc | StrategyKind::EdkNoAc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::EdkAc => "edk-ac",
            StrategyKind::EmkAc => "emk-ac",
            StrategyKind::Lun => "lun",
            StrategyKind::EdkNoAc => "edk-no-ac",
            StrategyKind::EmkNoAc => "emk-no-ac",
            StrategyKind::UniformNoAc => "uniform-no-ac",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "edk-ac" | "edk_ac" => Ok(StrategyKind::EdkAc),
            "emk-ac" | "emk_ac" => Ok(StrategyKind::EmkAc),
            "lun" => Ok(StrategyKind::Lun),
            "edk-no-ac" | "edk-noac" | "edk" => Ok(StrategyKind::EdkNoAc),
            "emk-no-ac" | "emk-noac" | "emk" => Ok(StrategyKind::EmkNoAc),
            "uniform-no-ac" | "uniform-noac" | "uniform" => Ok(StrategyKind::UniformNoAc),
            other => Err(ConfigError::new(
                "strategy",
                format!(
                    "unknown strategy '{other}' (expected one of edk-ac, emk-ac, lun, edk-no-ac, emk-no-ac, uniform-no-ac)"
                ),
            )),
        }
    }
}

/// A strategy with its resolved parameters. `alpha` and `xi` are present
/// only for the sleep-based variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub alpha: Option<f64>,
    pub xi: Option<f64>,
}

impl Strategy {
    /// Engagement decision for one device this iteration. A device can only
    /// engage if the battery covers the computation + reception cost; sleep
    /// strategies additionally stay idle with probability p_s.
    pub fn decide_engagement(
        &self,
        battery: &Battery,
        ep: &EnergyProfile,
        rng: &mut SimRng,
    ) -> bool {
        if battery.level() < ep.engage_cost() {
            return false;
        }
        if self.kind.uses_sleep() {
            let alpha = self.alpha.expect("sleep strategy without resolved alpha");
            let p_s = sleep_probability(battery.level(), battery.capacity(), alpha);
            rng.random::<f64>() >= p_s
        } else {
            true
        }
    }

    /// Transmission decision for an engaged device. The battery (already
    /// debited for the engagement) must cover the transmit cost.
    #[allow(clippy::too_many_arguments)]
    pub fn decide_transmission(
        &self,
        update_norm: f64,
        lambda: f64,
        battery: &Battery,
        users: usize,
        channels: usize,
        ep: &EnergyProfile,
        rng: &mut SimRng,
    ) -> bool {
        if battery.level() < ep.e_tx {
            return false;
        }
        let p = if self.kind.is_adaptive() {
            tx_probability(update_norm, lambda)
        } else {
            channels as f64 / users as f64
        };
        rng.random::<f64>() < p
    }
}

/// Norm-based transmission probability: clamp(e ln(norm) - lambda, 0, 1).
/// A zero norm yields probability 0.
pub fn tx_probability(norm: f64, lambda: f64) -> f64 {
    debug_assert!(norm >= 0.0);
    if norm <= 0.0 {
        return 0.0;
    }
    (std::f64::consts::E * norm.ln() - lambda).clamp(0.0, 1.0)
}

/// Sleep probability: clamp(1 - alpha level/capacity, 0, 1).
pub fn sleep_probability(level: f64, capacity: f64, alpha: f64) -> f64 {
    debug_assert!((0.0..=capacity).contains(&level));
    (1.0 - alpha * level / capacity).clamp(0.0, 1.0)
}

/// The base station's channel-utilization feedback signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackState {
    pub lambda: f64,
    /// Step size mu_1.
    pub step: f64,
    pub channels: usize,
    /// Attempted-transmission count observed at the previous iteration.
    pub last_attempted: usize,
}

impl FeedbackState {
    pub fn new(step: f64, channels: usize) -> Self {
        FeedbackState {
            lambda: 0.0,
            step,
            channels,
            last_attempted: 0,
        }
    }

    /// lambda' = lambda + mu_1 (K_hat - M), driving the expected number of
    /// attempted transmissions toward the channel count.
    pub fn update_feedback(&mut self, attempted: usize) {
        self.lambda += self.step * (attempted as f64 - self.channels as f64);
        self.last_attempted = attempted;
    }
}

/// Per-slot distribution of the compound-Poisson income, in whole energy
/// units: P(zeta = j) = sum_n Pois(rate)(n) Pois(n m/r)(j). The n-sum is cut
/// once its remaining mass drops below 1e-13.
pub fn income_pmf(rate: f64, mean_units: f64, j_max: usize) -> Vec<f64> {
    let per_arrival = mean_units / rate;
    let mut pmf = vec![0.0; j_max + 1];
    let mut p_n = (-rate).exp(); // P(N = 0)
    let mut covered = 0.0;
    let mut n = 0usize;
    // the recurrence starts from exp(-rate), which underflows for rate
    // beyond ~700; the iteration cap keeps such inputs from spinning
    let max_n = 64 + (20.0 * rate) as usize;
    loop {
        if n == 0 {
            pmf[0] += p_n;
        } else {
            let lam = n as f64 * per_arrival;
            let mut p_j = (-lam).exp();
            for (j, slot) in pmf.iter_mut().enumerate() {
                *slot += p_n * p_j;
                p_j *= lam / (j + 1) as f64;
            }
        }
        covered += p_n;
        if 1.0 - covered < 1e-13 || n >= max_n {
            break;
        }
        n += 1;
        p_n *= rate / n as f64;
    }
    pmf
}

/// Exact capacity-truncated mean income E[min(zeta, cap)] in joules,
/// computed by summation of the per-slot compound-Poisson pmf.
pub fn truncated_mean_income_exact(
    rate: f64,
    mean_units: f64,
    unit_joules: f64,
    cap_joules: f64,
) -> f64 {
    if cap_joules <= 0.0 {
        return 0.0;
    }
    let cap_units = cap_joules / unit_joules;
    // grow the support until its tail mass is negligible or it passes cap
    let mut j_max = 64usize;
    let pmf = loop {
        let pmf = income_pmf(rate, mean_units, j_max);
        let mass: f64 = pmf.iter().sum();
        if 1.0 - mass < 1e-12 || j_max as f64 >= cap_units || j_max >= (1 << 22) {
            break pmf;
        }
        j_max *= 2;
    };
    let j_cut = (cap_units.floor() as usize).min(j_max);
    let mut below = 0.0;
    let mut mass_below = 0.0;
    for (j, p) in pmf.iter().enumerate().take(j_cut + 1) {
        below += j as f64 * p;
        mass_below += p;
    }
    // E[min(zeta, cap)] can never exceed E[zeta]; the clamp also bounds the
    // damage should the pmf support get cut short
    (below + cap_units * (1.0 - mass_below)).min(mean_units) * unit_joules
}

/// Monte-Carlo estimate of E[min(zeta, cap)] in joules over `samples` slots
/// of a fresh income stream.
pub fn truncated_mean_income(
    proc: &mut EhProcess,
    cap_joules: f64,
    samples: u64,
    rng: &mut SimRng,
) -> Result<f64, ConfigError> {
    if samples == 0 {
        return Err(ConfigError::new("samples", "need at least one slot"));
    }
    if cap_joules <= 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for _ in 0..samples {
        total += proc.sample_income(rng).min(cap_joules);
    }
    Ok(total / samples as f64)
}

fn alpha_from_income(
    harvested: f64,
    xi: f64,
    b_max: f64,
    channels: usize,
    users: usize,
    ep: &EnergyProfile,
) -> Result<f64, ConfigError> {
    if !(xi > 0.0 && xi < b_max) {
        return Err(ConfigError::new(
            "xi",
            format!("target residual must lie in (0, B_max), got {xi} with B_max {b_max}"),
        ));
    }
    let tx_share = channels as f64 / users as f64 * ep.e_tx;
    let alpha = (harvested - tx_share) * b_max / (xi * ep.engage_cost());
    Ok(alpha.max(0.0))
}

/// Distribution-knowledge alpha: uses the capacity-truncated mean income
/// E[min(zeta, B_max - xi)], evaluated exactly from the compound-Poisson
/// pmf. Clamps to 0 when the income cannot even cover the transmissions.
pub fn alpha_edk(
    proc: &EhProcess,
    xi: f64,
    b_max: f64,
    channels: usize,
    users: usize,
    ep: &EnergyProfile,
) -> Result<f64, ConfigError> {
    alpha_edk_exact(
        proc.rate(),
        proc.mean_units(),
        proc.unit_joules(),
        xi,
        b_max,
        channels,
        users,
        ep,
    )
}

/// [`alpha_edk`] from the raw income parameters instead of a process
/// instance.
#[allow(clippy::too_many_arguments)]
pub fn alpha_edk_exact(
    rate: f64,
    mean_units: f64,
    unit_joules: f64,
    xi: f64,
    b_max: f64,
    channels: usize,
    users: usize,
    ep: &EnergyProfile,
) -> Result<f64, ConfigError> {
    let harvested = truncated_mean_income_exact(rate, mean_units, unit_joules, b_max - xi);
    alpha_from_income(harvested, xi, b_max, channels, users, ep)
}

/// As [`alpha_edk`] but with the truncated mean estimated by seeded
/// Monte-Carlo instead of exact summation.
#[allow(clippy::too_many_arguments)]
pub fn alpha_edk_mc(
    proc: &mut EhProcess,
    xi: f64,
    b_max: f64,
    channels: usize,
    users: usize,
    ep: &EnergyProfile,
    samples: u64,
    rng: &mut SimRng,
) -> Result<f64, ConfigError> {
    if !(xi > 0.0 && xi < b_max) {
        return Err(ConfigError::new(
            "xi",
            "target residual must lie in (0, B_max)",
        ));
    }
    let harvested = truncated_mean_income(proc, b_max - xi, samples, rng)?;
    alpha_from_income(harvested, xi, b_max, channels, users, ep)
}

/// Mean-knowledge alpha: uses the raw mean income E[zeta] (in joules),
/// ignoring the battery-capacity truncation.
pub fn alpha_emk(
    mean_income: f64,
    xi: f64,
    b_max: f64,
    channels: usize,
    users: usize,
    ep: &EnergyProfile,
) -> Result<f64, ConfigError> {
    alpha_from_income(mean_income, xi, b_max, channels, users, ep)
}
