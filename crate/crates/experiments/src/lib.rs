//! Environments, baseline policies and the experiment harness.

pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;

pub use error::{Error, Result};
