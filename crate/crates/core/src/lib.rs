//! Discrete-time simulator of federated learning over a multichannel
//! slotted-ALOHA network of energy-harvesting devices.
//!
//! Devices train a shared linear-regression model. Each iteration they
//! harvest energy, decide whether to engage (a battery-proportional sleep
//! rule keeps the expected battery at a target residual), compute a local
//! update, and contend for M random-access channels to deliver it. The
//! crate provides:
//!
//! - [`model`]: dataset generation, local gradients, aggregation, error metric
//! - [`energy`]: per-iteration energy costs, compound-Poisson income, battery
//! - [`policy`]: engagement/transmission rules and sleep-coefficient tuning
//! - [`mac`]: multichannel slotted-ALOHA contention
//! - [`sim`]: the iteration loop, replications, and metric capture
//! - [`rng`]: deterministic hierarchical random streams

pub mod energy;
pub mod error;
pub mod mac;
pub mod model;
pub mod policy;
pub mod rng;
pub mod sim;

pub use energy::{Battery, EhProcess, EnergyProfile, HardwareProfile};
pub use error::{ConfigError, SimError};
pub use mac::{contend, ContentionOutcome};
pub use model::{GlobalModel, LocalUpdate, Sample};
pub use policy::{FeedbackState, Strategy, StrategyKind};
pub use rng::{substream, SimRng, StreamKind};
pub use sim::{
    run_experiment, run_single, Error, ExperimentResult, IterationRecord, IterationStats, RunState,
    SimConfig, Stat,
};
