//! Finite non-stationary MDPs: model types, the span semi-norm and the exact
//! Bellman operators.
//!
//! Time runs over `0..=T`, i.e. `T + 1` decision epochs. All argmax operations
//! break ties toward the lowest [`ActionId`].

mod document;
mod kernel;
mod matrix;

use std::fmt;
use std::ops::{Index, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

pub use document::MdpDocument;
pub use kernel::{tv_distance, KernelRow, RewardTable, TransitionKernel, STOCHASTIC_TOL};
pub use matrix::{kernel_compose, TransitionMatrix, COMPOSE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Span semi-norm `max_i v(i) - min_i v(i)`.
pub fn span(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Dimension("span of an empty vector".into()));
    }
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(hi - lo)
}

/// A real vector indexed by state, optionally tagged with the epoch it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    values: Vec<f64>,
    time_tag: Option<usize>,
}

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, time_tag: None }
    }

    pub fn zeros(num_states: usize) -> Self {
        Self::new(vec![0.0; num_states])
    }

    pub fn with_time(mut self, t: usize) -> Self {
        self.time_tag = Some(t);
        self
    }

    pub fn time_tag(&self) -> Option<usize> {
        self.time_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn span(&self) -> Result<f64> {
        span(&self.values)
    }

    /// Entrywise `self + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|x| x + c).collect(), time_tag: self.time_tag }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Index of the largest entry, ties toward the lowest state.
    pub fn argmax(&self) -> StateId {
        let mut best = 0;
        for (i, &x) in self.values.iter().enumerate() {
            if x > self.values[best] {
                best = i;
            }
        }
        StateId(best)
    }
}

impl From<Vec<f64>> for ValueVector {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

impl Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl Sub for &ValueVector {
    type Output = ValueVector;
    fn sub(self, rhs: &ValueVector) -> ValueVector {
        assert_eq!(self.len(), rhs.len(), "value vectors of different length");
        ValueVector::new(self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect())
    }
}

/// A deterministic time-indexed policy: `actions[t][s]` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySchedule {
    num_states: usize,
    actions: Vec<ActionId>,
}

impl PolicySchedule {
    pub fn new(num_states: usize, slices: Vec<Vec<ActionId>>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::Dimension("policy schedule needs at least one epoch".into()));
        }
        let mut actions = Vec::with_capacity(slices.len() * num_states);
        for (t, slice) in slices.into_iter().enumerate() {
            if slice.len() != num_states {
                return Err(Error::Dimension(format!(
                    "policy slice {t} has {} entries, expected {num_states}",
                    slice.len()
                )));
            }
            actions.extend(slice);
        }
        Ok(Self { num_states, actions })
    }

    pub fn from_fn(
        num_epochs: usize,
        num_states: usize,
        mut f: impl FnMut(usize, usize) -> ActionId,
    ) -> Self {
        let mut actions = Vec::with_capacity(num_epochs * num_states);
        for t in 0..num_epochs {
            for s in 0..num_states {
                actions.push(f(t, s));
            }
        }
        Self { num_states, actions }
    }

    /// The same action everywhere.
    pub fn constant(num_epochs: usize, num_states: usize, action: ActionId) -> Self {
        Self::from_fn(num_epochs, num_states, |_, _| action)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_epochs(&self) -> usize {
        self.actions.len() / self.num_states
    }

    pub fn action(&self, t: usize, s: usize) -> ActionId {
        self.actions[t * self.num_states + s]
    }

    pub fn slice(&self, t: usize) -> &[ActionId] {
        &self.actions[t * self.num_states..(t + 1) * self.num_states]
    }

    /// Checks the schedule fits `mdp`: same state count, `T + 1` epochs, valid actions.
    pub fn validate_for(&self, mdp: &NonStationaryMdp) -> Result<()> {
        if self.num_states != mdp.num_states() || self.num_epochs() != mdp.horizon() + 1 {
            return Err(Error::Dimension(format!(
                "schedule is {} epochs x {} states, model is {} x {}",
                self.num_epochs(),
                self.num_states,
                mdp.horizon() + 1,
                mdp.num_states()
            )));
        }
        if let Some(a) = self.actions.iter().find(|a| a.0 >= mdp.num_actions()) {
            return Err(Error::Index(format!("action {} not below {}", a.0, mdp.num_actions())));
        }
        Ok(())
    }
}

/// `Q(s, a) = r(s, a) + E[v(s') | s, a]` for one epoch.
#[inline]
pub fn q_value(kernel: &TransitionKernel, rewards: &RewardTable, v: &[f64], s: usize, a: usize) -> f64 {
    rewards.get(s, a) + kernel.row(s, a).expect(v)
}

/// One greedy backup `max_a { r(s,a) + P(.|s,a) v }` with lowest-index ties.
pub fn greedy_backup(
    kernel: &TransitionKernel,
    rewards: &RewardTable,
    v: &[f64],
) -> (Vec<f64>, Vec<ActionId>) {
    let (ns, na) = (kernel.num_states(), kernel.num_actions());
    let mut values = Vec::with_capacity(ns);
    let mut actions = Vec::with_capacity(ns);
    for s in 0..ns {
        let mut best = q_value(kernel, rewards, v, s, 0);
        let mut best_a = 0;
        for a in 1..na {
            let q = q_value(kernel, rewards, v, s, a);
            if q > best {
                best = q;
                best_a = a;
            }
        }
        values.push(best);
        actions.push(ActionId(best_a));
    }
    (values, actions)
}

/// The tuple `(S, A, T, {P_t}, {r_t})`.
///
/// Kernels and rewards are reference counted so forecast windows and
/// derived instances can share them without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct NonStationaryMdp {
    num_states: usize,
    num_actions: usize,
    kernels: Vec<Arc<TransitionKernel>>,
    rewards: Vec<Arc<RewardTable>>,
}

impl NonStationaryMdp {
    pub fn new(kernels: Vec<Arc<TransitionKernel>>, rewards: Vec<Arc<RewardTable>>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Dimension("model needs at least one epoch".into()));
        }
        if kernels.len() != rewards.len() {
            return Err(Error::Dimension(format!(
                "{} kernels but {} reward tables",
                kernels.len(),
                rewards.len()
            )));
        }
        let (ns, na) = (kernels[0].num_states(), kernels[0].num_actions());
        for (t, (k, r)) in kernels.iter().zip(&rewards).enumerate() {
            if k.num_states() != ns
                || k.num_actions() != na
                || r.num_states() != ns
                || r.num_actions() != na
            {
                return Err(Error::Dimension(format!("epoch {t} dimensions differ from epoch 0")));
            }
        }
        Ok(Self { num_states: ns, num_actions: na, kernels, rewards })
    }

    /// Convenience constructor taking owned tables.
    pub fn from_tables(kernels: Vec<TransitionKernel>, rewards: Vec<RewardTable>) -> Result<Self> {
        Self::new(
            kernels.into_iter().map(Arc::new).collect(),
            rewards.into_iter().map(Arc::new).collect(),
        )
    }

    /// Same kernel and reward at every epoch `0..=horizon`.
    pub fn stationary(kernel: TransitionKernel, rewards: RewardTable, horizon: usize) -> Result<Self> {
        let k = Arc::new(kernel);
        let r = Arc::new(rewards);
        Self::new(vec![k; horizon + 1], vec![r; horizon + 1])
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `T`; epochs are `0..=T`.
    pub fn horizon(&self) -> usize {
        self.kernels.len() - 1
    }

    pub fn kernel(&self, t: usize) -> &Arc<TransitionKernel> {
        &self.kernels[t]
    }

    pub fn rewards(&self, t: usize) -> &Arc<RewardTable> {
        &self.rewards[t]
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t > self.horizon() {
            return Err(Error::Index(format!("time {t} beyond horizon {}", self.horizon())));
        }
        Ok(())
    }

    fn check_vector(&self, v: &ValueVector) -> Result<()> {
        if v.len() != self.num_states {
            return Err(Error::Dimension(format!(
                "value vector has {} entries, model has {} states",
                v.len(),
                self.num_states
            )));
        }
        Ok(())
    }

    fn check_slice(&self, pi_t: &[ActionId]) -> Result<()> {
        if pi_t.len() != self.num_states {
            return Err(Error::Dimension(format!(
                "policy slice has {} entries, model has {} states",
                pi_t.len(),
                self.num_states
            )));
        }
        if let Some(a) = pi_t.iter().find(|a| a.0 >= self.num_actions) {
            return Err(Error::Index(format!("action {} not below {}", a.0, self.num_actions)));
        }
        Ok(())
    }

    /// `L_t v` together with its greedy slice.
    pub fn bellman_apply(&self, t: usize, v: &ValueVector) -> Result<(ValueVector, Vec<ActionId>)> {
        self.check_time(t)?;
        self.check_vector(v)?;
        let (values, actions) = greedy_backup(&self.kernels[t], &self.rewards[t], v.as_slice());
        Ok((ValueVector::new(values).with_time(t), actions))
    }

    /// `L_t^pi v` for a deterministic slice `pi_t`.
    pub fn bellman_apply_policy(&self, t: usize, pi_t: &[ActionId], v: &ValueVector) -> Result<ValueVector> {
        self.check_time(t)?;
        self.check_vector(v)?;
        self.check_slice(pi_t)?;
        let (k, r) = (&self.kernels[t], &self.rewards[t]);
        let values = (0..self.num_states).map(|s| q_value(k, r, v.as_slice(), s, pi_t[s].0)).collect();
        Ok(ValueVector::new(values).with_time(t))
    }

    /// `L_{t_start} ∘ ... ∘ L_{t_end} v`; `L_{t_end}` is applied first.
    pub fn bellman_compose(&self, t_start: usize, t_end: usize, v: &ValueVector) -> Result<ValueVector> {
        if t_start > t_end {
            return Err(Error::Range(format!("t_start {t_start} after t_end {t_end}")));
        }
        self.check_time(t_end)?;
        self.check_vector(v)?;
        let mut cur = v.as_slice().to_vec();
        for t in (t_start..=t_end).rev() {
            cur = greedy_backup(&self.kernels[t], &self.rewards[t], &cur).0;
        }
        Ok(ValueVector::new(cur).with_time(t_start))
    }

    /// State-to-state matrix `P_t^pi`: row `s` is `P_t(. | s, pi_t(s))`.
    pub fn kernel_under_policy(&self, t: usize, pi_t: &[ActionId]) -> Result<TransitionMatrix> {
        self.check_time(t)?;
        self.check_slice(pi_t)?;
        let n = self.num_states;
        let mut data = vec![0.0; n * n];
        for s in 0..n {
            for (j, p) in self.kernels[t].row(s, pi_t[s].0).iter() {
                data[s * n + j] += p;
            }
        }
        TransitionMatrix::new(n, data)
    }

    /// Dense serialisable form.
    pub fn to_document(&self) -> MdpDocument {
        MdpDocument::from_mdp(self)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_document()).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        doc.into_mdp()
    }
}

#[cfg(test)]
mod tests;
