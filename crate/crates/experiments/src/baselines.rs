//! Forecast-free reference policies.
//!
//! A [`Policy`] sees only the epoch and the current state, so none of these
//! can read a forecast.

use mpdp_core::{ActionId, StateId};
use serde::Deserialize;

use crate::env::{EvInstance, QueueModel};
use crate::error::{Error, Result};

/// A decision rule `(t, s) -> a`.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;
    fn act(&self, t: usize, s: StateId) -> Result<ActionId>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSpec {
    Fas,
    Rsrt { threshold: usize },
    Sllf,
    Random { seed: u64 },
}

/// Servers sorted by decreasing service rate, ties by index.
fn speed_order(model: &QueueModel) -> Vec<usize> {
    let mu = &model.config().service_rates;
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]).then(a.cmp(&b)));
    order
}

/// Assigns the head job to the fastest idle server whenever one exists.
pub fn fas_action(model: &QueueModel, s: StateId) -> Result<ActionId> {
    let state = model.codec().decode(s)?;
    if state.queue > 0 {
        if let Some(i) = speed_order(model).into_iter().find(|&i| !state.busy[i]) {
            return Ok(ActionId(i));
        }
    }
    Ok(model.codec().wait_action())
}

/// Keeps the fastest server fed and engages slower servers only while the
/// queue is longer than `threshold`.
pub fn rsrt_action(model: &QueueModel, s: StateId, threshold: usize) -> Result<ActionId> {
    let state = model.codec().decode(s)?;
    let order = speed_order(model);
    if state.queue > 0 && !state.busy[order[0]] {
        return Ok(ActionId(order[0]));
    }
    if state.queue > threshold {
        if let Some(i) = order.into_iter().find(|&i| !state.busy[i]) {
            return Ok(ActionId(i));
        }
    }
    Ok(model.codec().wait_action())
}

/// Least laxity first: vehicles ordered by `(d - t) - remaining / mu`, ties by
/// stand, each charged as fast as allowed until the station cap is used up.
/// The result is mapped to the nearest deadline-safe action.
pub fn sllf_action(instance: &EvInstance, t: usize, s: StateId) -> Result<ActionId> {
    let config = &instance.config;
    let remaining = instance.codec.decode(s)?;
    let mu = config.rate_cap;
    let mut present: Vec<(f64, usize)> = (0..config.num_stands)
        .filter(|&i| remaining[i] > 0)
        .filter_map(|i| {
            instance.occupant(t, i).map(|ev| (ev.departure as f64 - t as f64 - remaining[i] as f64 / mu as f64, i))
        })
        .collect();
    present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut rates = vec![0; config.num_stands];
    let mut capacity = config.station_cap;
    for (_, i) in present {
        let r = mu.min(remaining[i]).min(capacity);
        rates[i] = r;
        capacity -= r;
    }
    let a = instance
        .actions
        .iter()
        .position(|v| *v == rates)
        .ok_or_else(|| Error::Infeasible(format!("rate vector {rates:?} is not an action")))?;
    Ok(instance.effective_action(t, s, ActionId(a)))
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform action per `(t, s)`, fixed by the seed.
pub fn random_action(seed: u64, num_actions: usize, t: usize, s: StateId) -> ActionId {
    let h = mix64(mix64(seed ^ mix64(t as u64)) ^ s.0 as u64);
    ActionId((h % num_actions as u64) as usize)
}

/// Environment handle a baseline binds to.
#[derive(Clone, Copy)]
pub enum Target<'a> {
    Queueing(&'a QueueModel),
    Ev(&'a EvInstance),
    Other { num_actions: usize },
}

/// A baseline bound to its environment.
pub struct Baseline<'a> {
    spec: BaselineSpec,
    target: Target<'a>,
}

impl<'a> Baseline<'a> {
    /// Errors when the baseline does not apply to the environment.
    pub fn bind(spec: BaselineSpec, target: Target<'a>) -> Result<Self> {
        let ok = matches!(
            (spec, target),
            (BaselineSpec::Fas | BaselineSpec::Rsrt { .. }, Target::Queueing(_))
                | (BaselineSpec::Sllf, Target::Ev(_))
                | (BaselineSpec::Random { .. }, _)
        );
        if !ok {
            return Err(Error::TypeMismatch(format!("{} does not apply to this environment", spec.label())));
        }
        Ok(Self { spec, target })
    }
}

impl BaselineSpec {
    pub fn label(&self) -> String {
        match self {
            BaselineSpec::Fas => "fas".into(),
            BaselineSpec::Rsrt { threshold } => format!("rsrt({threshold})"),
            BaselineSpec::Sllf => "sllf".into(),
            BaselineSpec::Random { seed } => format!("random({seed})"),
        }
    }
}

impl Policy for Baseline<'_> {
    fn name(&self) -> String {
        self.spec.label()
    }

    fn act(&self, t: usize, s: StateId) -> Result<ActionId> {
        match (self.spec, self.target) {
            (BaselineSpec::Fas, Target::Queueing(m)) => fas_action(m, s),
            (BaselineSpec::Rsrt { threshold }, Target::Queueing(m)) => rsrt_action(m, s, threshold),
            (BaselineSpec::Sllf, Target::Ev(ev)) => sllf_action(ev, t, s),
            (BaselineSpec::Random { seed }, target) => {
                let na = match target {
                    Target::Queueing(m) => m.config().num_actions(),
                    Target::Ev(ev) => ev.actions.len(),
                    Target::Other { num_actions } => num_actions,
                };
                Ok(random_action(seed, na, t, s))
            }
            _ => Err(Error::TypeMismatch(format!("{} does not apply to this environment", self.spec.label()))),
        }
    }
}
