//! Seeded random instances whose kernels mix with the uniform distribution.

use mpdp_core::{NonStationaryMdp, RewardTable, TransitionKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

/// Kernel rows are `(1 - m) * Dirichlet(1) + m * uniform`, so any two rows
/// overlap in at least `m` total mass; rewards are uniform in `[0, 1]`.
pub fn random_ergodic_mdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    mixing_floor: f64,
    seed: u64,
) -> Result<NonStationaryMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::Config("random MDP needs at least one state and one action".into()));
    }
    if !(mixing_floor > 0.0 && mixing_floor <= 1.0) {
        return Err(Error::Config(format!("mixing floor {mixing_floor} must lie in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = 1.0 / num_states as f64;
    let mut kernels = Vec::with_capacity(horizon + 1);
    let mut rewards = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let rows = (0..num_states * num_actions)
            .map(|_| {
                let raw: Vec<f64> = (0..num_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = raw.iter().sum();
                raw.iter().map(|x| (1.0 - mixing_floor) * x / total + mixing_floor * uniform).enumerate().collect()
            })
            .collect();
        kernels.push(TransitionKernel::from_rows(num_states, num_actions, rows)?);
        let values = (0..num_states * num_actions).map(|_| rng.random::<f64>()).collect();
        rewards.push(RewardTable::new(num_states, num_actions, values)?);
    }
    Ok(NonStationaryMdp::from_tables(kernels, rewards)?)
}
