use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{NonStationaryMdp, RewardTable, StateId, TransitionKernel};

/// Three-state instance where the rewarding sink is only revealed after the
/// look-ahead window of the first decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub mdp: NonStationaryMdp,
    /// The sink paying reward 1 from time `k + 2` on.
    pub rewarded_sink: StateId,
    pub k: usize,
}

impl Counterexample {
    /// Start state.
    pub const START: StateId = StateId(0);

    /// Value of the clairvoyant policy from the start state: `T - k - 1`.
    pub fn optimal_value(&self) -> f64 {
        (self.mdp.horizon() - self.k - 1) as f64
    }
}

/// Start state `0`; action `0` moves to sink `1`, action `1` to sink `2`.
/// Sinks absorb. Reward is 1 in `rewarded_sink` at every `t >= k + 2`.
pub fn counterexample_mdp(k: usize, horizon: usize, rewarded_sink: StateId) -> Result<Counterexample> {
    if k + 1 >= horizon {
        return Err(Error::Range(format!("need k + 1 < T, got k = {k}, T = {horizon}")));
    }
    if !(1..=2).contains(&rewarded_sink.0) {
        return Err(Error::Index(format!("rewarded sink must be state 1 or 2, got {rewarded_sink}")));
    }
    let kernel = Arc::new(TransitionKernel::from_rows(
        3,
        2,
        vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)], vec![(2, 1.0)]],
    )?);
    let zeros = Arc::new(RewardTable::zeros(3, 2));
    let mut paid = vec![0.0; 6];
    paid[rewarded_sink.0 * 2] = 1.0;
    paid[rewarded_sink.0 * 2 + 1] = 1.0;
    let paid = Arc::new(RewardTable::new(3, 2, paid)?);
    let rewards = (0..=horizon).map(|t| if t >= k + 2 { paid.clone() } else { zeros.clone() }).collect();
    let mdp = NonStationaryMdp::new(vec![kernel; horizon + 1], rewards)?;
    Ok(Counterexample { mdp, rewarded_sink, k })
}

/// [`counterexample_mdp`] with the rewarded sink drawn uniformly.
pub fn random_counterexample(k: usize, horizon: usize, rng: &mut impl Rng) -> Result<Counterexample> {
    let sink = if rng.random_bool(0.5) { 1 } else { 2 };
    counterexample_mdp(k, horizon, StateId(sink))
}
