//! Planning in finite non-stationary Markov decision processes with look-ahead
//! forecasts.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`] holds the time-indexed model, the span semi-norm and the exact
//!   Bellman operators every other module composes.
//! * [`analysis`] computes structural constants of an instance: the ergodicity
//!   coefficient, the multi-stage contraction coefficient, the moving-target
//!   diameter, and the closed-form regret bound.
//! * [`forecast`] produces forecast windows (exact, perturbed, or driven by a
//!   noisy scalar parameter) and measures their realised error.
//! * [`planner`] implements the receding-horizon planner, the offline-optimal
//!   oracle and exact policy evaluation.

pub mod analysis;
pub mod error;
pub mod forecast;
pub mod mdp;
pub mod planner;

#[cfg(test)]
pub(crate) mod test_support;

pub use error::{Error, Result};
pub use mdp::{
    span, ActionId, NonStationaryMdp, PolicySchedule, RewardTable, StateId, TransitionKernel,
    TransitionMatrix, ValueVector,
};
