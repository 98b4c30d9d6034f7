//! Seeded random instances shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{NonStationaryMdp, RewardTable, TransitionKernel};

pub fn random_row(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // force exact unit mass on the last entry
    let head: f64 = row[..n - 1].iter().sum();
    row[n - 1] = (1.0 - head).max(0.0);
    row
}

pub fn random_kernel(rng: &mut impl Rng, ns: usize, na: usize, floor: f64) -> TransitionKernel {
    let rows = (0..ns * na)
        .map(|_| {
            random_row(rng, ns)
                .into_iter()
                .map(|p| (1.0 - floor) * p + floor / ns as f64)
                .enumerate()
                .collect()
        })
        .collect();
    TransitionKernel::from_rows(ns, na, rows).unwrap()
}

pub fn random_mdp(seed: u64, ns: usize, na: usize, horizon: usize, floor: f64) -> NonStationaryMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernels = (0..=horizon).map(|_| random_kernel(&mut rng, ns, na, floor)).collect();
    let rewards = (0..=horizon)
        .map(|_| RewardTable::new(ns, na, (0..ns * na).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect();
    NonStationaryMdp::from_tables(kernels, rewards).unwrap()
}
