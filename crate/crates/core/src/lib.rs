//! Sleeping multi-armed bandits with stochastically available arms and
//! adversarial (oblivious) losses.
//!
//! The crate provides:
//!
//! - [`weights`]: simplex primitives (redistribution onto awake sets,
//!   exponential-weights updates, categorical sampling) and the parameter
//!   schedules of the learners.
//! - [`estimators`]: availability estimates and the play-probability
//!   estimators (exact enumeration, Monte-Carlo resampling, empirical subset
//!   history) feeding the importance-weighted loss estimate.
//! - [`algorithms`]: Sleeping-EXP3 (exact and Monte-Carlo), Sleeping-EXP3G
//!   and two reference baselines behind one round-based learner contract.
//! - [`environments`]: availability and loss generators.
//! - [`evaluation`]: best-policy-in-hindsight regret, aggregation and the
//!   concentration audits.
//! - [`experiment`]: config-driven experiment runner used by the
//!   `sleepbench` binary.

pub mod algorithms;
pub mod environments;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod format;
pub mod seeding;
pub mod weights;

pub use algorithms::{run_episode, Learner, RoundOutcome, RunTrace, Variant};
pub use environments::{AvailabilityModel, Episode, LossMatrix, LossModel};
pub use error::{Error, Result};
pub use estimators::{AvailabilityEstimate, EstimatedLoss, PlayProbabilities};
pub use evaluation::{best_policy, regret_trajectory, HindsightPolicy, RegretTrajectory};
pub use weights::{ArmSet, Rule, ScheduleParams, WeightVector};
