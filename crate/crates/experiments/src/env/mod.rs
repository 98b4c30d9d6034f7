//! Environment builders.

pub mod ev;
pub mod queueing;
pub mod random;

pub use ev::{build_ev_mdp, EvArrival, EvCodec, EvConfig, EvInstance, PricePath};
pub use queueing::{build_queueing_mdp, ArrivalRate, QueueCodec, QueueConfig, QueueModel, QueueState};
pub use random::random_ergodic_mdp;
