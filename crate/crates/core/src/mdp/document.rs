use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{NonStationaryMdp, RewardTable, TransitionKernel};
use crate::error::{Error, Result};

/// Dense text representation of a [`NonStationaryMdp`].
///
/// * `kernels[t][s][a][s']` holds `P_t(s' | s, a)` for `t = 0..=horizon`.
/// * `rewards[t][s][a]` holds `r_t(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub kernels: Vec<Vec<Vec<Vec<f64>>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
}

impl MdpDocument {
    pub fn from_mdp(mdp: &NonStationaryMdp) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let kernels = (0..=mdp.horizon())
            .map(|t| {
                let dense = mdp.kernel(t).to_dense();
                (0..ns)
                    .map(|s| (0..na).map(|a| dense[(s * na + a) * ns..(s * na + a + 1) * ns].to_vec()).collect())
                    .collect()
            })
            .collect();
        let rewards = (0..=mdp.horizon())
            .map(|t| {
                let r = mdp.rewards(t);
                (0..ns).map(|s| (0..na).map(|a| r.get(s, a)).collect()).collect()
            })
            .collect();
        Self { num_states: ns, num_actions: na, horizon: mdp.horizon(), kernels, rewards }
    }

    pub fn into_mdp(self) -> Result<NonStationaryMdp> {
        let (ns, na) = (self.num_states, self.num_actions);
        if self.kernels.len() != self.horizon + 1 || self.rewards.len() != self.horizon + 1 {
            return Err(Error::Dimension(format!(
                "horizon {} needs {} kernels and reward tables, found {} and {}",
                self.horizon,
                self.horizon + 1,
                self.kernels.len(),
                self.rewards.len()
            )));
        }
        let mut kernels = Vec::with_capacity(self.horizon + 1);
        for (t, k) in self.kernels.into_iter().enumerate() {
            let dense = flatten3(k, ns, na, ns).map_err(|e| Error::Dimension(format!("kernel {t}: {e}")))?;
            kernels.push(Arc::new(TransitionKernel::from_dense(ns, na, &dense)?));
        }
        let mut rewards = Vec::with_capacity(self.horizon + 1);
        for (t, r) in self.rewards.into_iter().enumerate() {
            if r.len() != ns || r.iter().any(|row| row.len() != na) {
                return Err(Error::Dimension(format!("reward table {t} is not {ns}x{na}")));
            }
            rewards.push(Arc::new(RewardTable::new(ns, na, r.into_iter().flatten().collect())?));
        }
        NonStationaryMdp::new(kernels, rewards)
    }
}

fn flatten3(x: Vec<Vec<Vec<f64>>>, a: usize, b: usize, c: usize) -> std::result::Result<Vec<f64>, String> {
    if x.len() != a {
        return Err(format!("expected {a} states, got {}", x.len()));
    }
    let mut out = Vec::with_capacity(a * b * c);
    for mid in x {
        if mid.len() != b {
            return Err(format!("expected {b} actions, got {}", mid.len()));
        }
        for inner in mid {
            if inner.len() != c {
                return Err(format!("expected {c} successors, got {}", inner.len()));
            }
            out.extend(inner);
        }
    }
    Ok(out)
}
