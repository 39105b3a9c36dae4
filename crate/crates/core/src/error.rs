//! Error types shared across the simulator.

use thiserror::Error;

/// Rejected configuration or construction input.
#[derive(Debug, Clone, Error)]
#[error("invalid configuration: {field}: {reason}")]
pub struct ConfigError {
    /// Name of the offending field or parameter.
    pub field: &'static str,
    /// Human-readable explanation of the constraint that failed.
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// Runtime invariant violation inside a simulation run. These indicate a bug
/// (e.g. a feasibility check that let a battery go negative), not bad input.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("battery of device {device} would drop below zero at iteration {t} (level {level:e}, debit {debit:e})")]
    NegativeBattery {
        device: usize,
        t: u64,
        level: f64,
        debit: f64,
    },
    #[error("battery level {level:e} exceeds capacity {capacity:e}")]
    OverCapacity { level: f64, capacity: f64 },
}
