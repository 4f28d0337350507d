//! Future off-policy evaluation (F-OPE) and learning (F-OPL) for
//! non-stationary contextual bandits.
//!
//! The crate estimates the value of a policy at a *future* target time from
//! logs collected in the past. It leans on time-feature functions that
//! cluster timestamps (seasons, weekdays, ...) so that logged records sharing
//! the target's cluster can be importance-weighted toward it.

pub mod env;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod stats;
pub mod timefeat;
pub mod tuning;

pub use env::{EnvConfig, LoggedDataset, LoggedRecord, SyntheticEnv};
pub use error::{Error, Result};
pub use estimators::EstimateResult;
pub use policy::{Policy, SoftmaxPolicy};
pub use reward::{RewardModel, RewardPredictor};
pub use timefeat::{FeatureSpec, TimeDistribution, TimeFeatureFn, Timestamp};
