//! Electric vehicle charging station with a fluctuating energy price.
//!
//! Demand is quantised: each stand charges an integer number of quanta per
//! step (at most `rate_cap`), the station at most `station_cap` in total.
//! Vehicles keep the stand they were assigned on arrival; a full station
//! turns arrivals away. The state is the remaining demand per stand; the
//! arrival schedule is folded into the time-indexed kernels, so transitions
//! are deterministic.

use std::f64::consts::PI;
use std::sync::Arc;

use mpdp_core::{ActionId, NonStationaryMdp, RewardTable, StateId, TransitionKernel};
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

pub const DEFAULT_STATE_BUDGET: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PricePath {
    Constant { price: f64 },
    /// `(low + high) / 2 + (high - low) / 2 * clamp(sharpness * sin(2 pi t / period + phase), -1, 1)`
    SmoothedSquare {
        low: f64,
        high: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    /// One entry per epoch `0..=T`.
    Listed { prices: Vec<f64> },
}

fn default_sharpness() -> f64 {
    1.5
}

impl PricePath {
    pub fn price(&self, t: usize) -> f64 {
        match self {
            PricePath::Constant { price } => *price,
            PricePath::SmoothedSquare { low, high, period, phase, sharpness } => {
                let wave = (sharpness * (2.0 * PI * t as f64 / period + phase).sin()).clamp(-1.0, 1.0);
                0.5 * (low + high) + 0.5 * (high - low) * wave
            }
            PricePath::Listed { prices } => prices[t.min(prices.len() - 1)],
        }
    }
}

/// One vehicle: present for charging at steps `arrival..departure`, needing
/// `demand` quanta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvArrival {
    pub arrival: usize,
    pub departure: usize,
    pub demand: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvConfig {
    pub num_stands: usize,
    /// Quanta per stand per step (`mu`).
    pub rate_cap: usize,
    /// Quanta per step for the whole station (`C`).
    pub station_cap: usize,
    /// Largest demand in quanta; sets the per-stand state radix.
    pub max_demand: usize,
    /// Energy per quantum, used only for reporting.
    pub demand_quantum: f64,
    pub price: PricePath,
    pub low_price_threshold: f64,
    pub horizon: usize,
    pub arrivals: Vec<EvArrival>,
}

impl Default for EvConfig {
    fn default() -> Self {
        Self {
            num_stands: 3,
            rate_cap: 1,
            station_cap: 2,
            max_demand: 6,
            demand_quantum: 1.0,
            price: PricePath::SmoothedSquare { low: 2.0, high: 18.0, period: 12.0, phase: 0.0, sharpness: 1.5 },
            low_price_threshold: 8.0,
            horizon: 48,
            arrivals: Vec::new(),
        }
    }
}

impl EvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_stands == 0 || self.rate_cap == 0 || self.station_cap == 0 || self.max_demand == 0 {
            return Err(Error::Config("stands, rate cap, station cap and max demand must be positive".into()));
        }
        if !(self.demand_quantum > 0.0) {
            return Err(Error::Config("demand quantum must be positive".into()));
        }
        if let PricePath::Listed { prices } = &self.price {
            if prices.len() < self.horizon + 1 {
                return Err(Error::Config(format!("listed prices need {} entries", self.horizon + 1)));
            }
        }
        for t in 0..=self.horizon {
            let p = self.price.price(t);
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Config(format!("price {p} at time {t} must be non-negative")));
            }
        }
        for ev in &self.arrivals {
            self.check_arrival(ev)?;
        }
        Ok(())
    }

    fn check_arrival(&self, ev: &EvArrival) -> Result<()> {
        if ev.departure <= ev.arrival || ev.departure > self.horizon + 1 {
            return Err(Error::Config(format!("vehicle {ev:?} must depart after arriving and by T + 1")));
        }
        if ev.demand == 0 || ev.demand > self.max_demand {
            return Err(Error::Config(format!("vehicle {ev:?} demand must lie in 1..={}", self.max_demand)));
        }
        if ev.demand > self.rate_cap * (ev.departure - ev.arrival) {
            return Err(Error::Infeasible(format!("vehicle {ev:?} cannot be charged at the stand rate cap")));
        }
        Ok(())
    }

    pub fn num_states(&self) -> u64 {
        (self.max_demand as u64 + 1).saturating_pow(self.num_stands as u32)
    }

    /// Rate vectors in `{0..=rate_cap}^stands` with total at most `station_cap`.
    pub fn action_vectors(&self) -> Vec<Vec<usize>> {
        let radix = self.rate_cap + 1;
        let total = radix.pow(self.num_stands as u32);
        (0..total)
            .map(|mut code| {
                (0..self.num_stands)
                    .map(|_| {
                        let c = code % radix;
                        code /= radix;
                        c
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|v| v.iter().sum::<usize>() <= self.station_cap)
            .collect()
    }
}

/// Mixed-radix index over remaining demand per stand, stand 0 least significant.
#[derive(Debug, Clone, PartialEq)]
pub struct EvCodec {
    num_stands: usize,
    levels: usize,
}

impl EvCodec {
    pub fn new(num_stands: usize, max_demand: usize) -> Self {
        Self { num_stands, levels: max_demand + 1 }
    }

    pub fn num_states(&self) -> usize {
        self.levels.pow(self.num_stands as u32)
    }

    pub fn encode(&self, remaining: &[usize]) -> Result<StateId> {
        if remaining.len() != self.num_stands || remaining.iter().any(|&r| r >= self.levels) {
            return Err(Error::Config(format!("remaining demand {remaining:?} outside the configured space")));
        }
        Ok(StateId(remaining.iter().rev().fold(0, |acc, &r| acc * self.levels + r)))
    }

    pub fn decode(&self, id: StateId) -> Result<Vec<usize>> {
        if id.0 >= self.num_states() {
            return Err(Error::Config(format!("state {id} outside the charging space")));
        }
        let mut code = id.0;
        Ok((0..self.num_stands)
            .map(|_| {
                let r = code % self.levels;
                code /= self.levels;
                r
            })
            .collect())
    }
}

/// Stand assignment: vehicles in arrival order take the lowest free stand.
fn assign_stands(config: &EvConfig, arrivals: &[EvArrival]) -> (Vec<(EvArrival, usize)>, Vec<EvArrival>) {
    let mut order: Vec<EvArrival> = arrivals.to_vec();
    order.sort_by_key(|ev| ev.arrival);
    let mut free_from = vec![0usize; config.num_stands];
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for ev in order {
        match (0..config.num_stands).find(|&i| free_from[i] <= ev.arrival) {
            Some(i) => {
                free_from[i] = ev.departure;
                accepted.push((ev, i));
            }
            None => rejected.push(ev),
        }
    }
    (accepted, rejected)
}

/// Time-indexed occupancy and the feasibility of every (t, state, action).
struct Structure {
    codec: EvCodec,
    actions: Vec<Vec<usize>>,
    /// `occupants[t][stand]` indexes `accepted`; `t = 0..=T+1`.
    occupants: Vec<Vec<Option<usize>>>,
    accepted: Vec<(EvArrival, usize)>,
    /// `ok[t][s * A + a]`: the step keeps every deadline reachable.
    ok: Vec<Vec<bool>>,
    feasible: Vec<Vec<bool>>,
}

impl Structure {
    fn new(config: &EvConfig, accepted: Vec<(EvArrival, usize)>) -> Self {
        let horizon = config.horizon;
        let codec = EvCodec::new(config.num_stands, config.max_demand);
        let actions = config.action_vectors();
        let mut occupants = vec![vec![None; config.num_stands]; horizon + 2];
        for (idx, (ev, stand)) in accepted.iter().enumerate() {
            for row in occupants.iter_mut().take(ev.departure).skip(ev.arrival) {
                row[*stand] = Some(idx);
            }
        }
        let mut s = Self { codec, actions, occupants, accepted, ok: Vec::new(), feasible: Vec::new() };
        s.solve_feasibility(horizon);
        s
    }

    /// Remaining demand after charging with `a` at time `t`, then departures
    /// and arrivals at `t + 1`. The flag is false when a departing vehicle
    /// still needs energy.
    fn step(&self, t: usize, rem: &[usize], a: usize) -> (Vec<usize>, Vec<usize>, bool) {
        let rates = &self.actions[a];
        let mut next = Vec::with_capacity(rem.len());
        let mut delivered = Vec::with_capacity(rem.len());
        let mut met = true;
        for (i, &r) in rem.iter().enumerate() {
            let here = self.occupants[t][i];
            let d = if here.is_some() { rates[i].min(r) } else { 0 };
            delivered.push(d);
            let mut left = if here.is_some() { r - d } else { 0 };
            let there = self.occupants[t + 1][i];
            if there != here {
                if left > 0 {
                    met = false;
                }
                left = there.map_or(0, |idx| self.accepted[idx].0.demand);
            }
            next.push(left);
        }
        (next, delivered, met)
    }

    fn solve_feasibility(&mut self, horizon: usize) {
        let (ns, na) = (self.codec.num_states(), self.actions.len());
        let mut ok = vec![vec![false; ns * na]; horizon + 1];
        let mut feasible = vec![vec![false; ns]; horizon + 2];
        feasible[horizon + 1] = vec![true; ns];
        for t in (0..=horizon).rev() {
            for s in 0..ns {
                let rem = self.codec.decode(StateId(s)).expect("state index in range");
                for a in 0..na {
                    let (next, _, met) = self.step(t, &rem, a);
                    let target = self.codec.encode(&next).expect("next state in range").0;
                    let good = met && feasible[t + 1][target];
                    ok[t][s * na + a] = good;
                    feasible[t][s] |= good;
                }
            }
        }
        self.ok = ok;
        self.feasible = feasible;
    }

    fn initial_state(&self) -> StateId {
        let rem: Vec<usize> =
            self.occupants[0].iter().map(|o| o.map_or(0, |idx| self.accepted[idx].0.demand)).collect();
        self.codec.encode(&rem).expect("initial demand in range")
    }
}

/// A built charging instance.
#[derive(Debug, Clone)]
pub struct EvInstance {
    pub config: EvConfig,
    pub codec: EvCodec,
    /// Rate vector of each action; action 0 charges nothing.
    pub actions: Vec<Vec<usize>>,
    pub accepted: Vec<(EvArrival, usize)>,
    pub rejected: Vec<EvArrival>,
    pub prices: Vec<f64>,
    pub mdp: NonStationaryMdp,
    pub initial_state: StateId,
    occupants: Vec<Vec<Option<usize>>>,
    ok: Vec<Vec<bool>>,
    feasible: Vec<Vec<bool>>,
}

impl EvInstance {
    /// Vehicle at `stand` during step `t`.
    pub fn occupant(&self, t: usize, stand: usize) -> Option<&EvArrival> {
        self.occupants[t][stand].map(|idx| &self.accepted[idx].0)
    }

    /// True when `a` keeps all deadlines reachable from `s` at `t`.
    pub fn is_feasible_action(&self, t: usize, s: StateId, a: ActionId) -> bool {
        self.ok[t][s.0 * self.actions.len() + a.0]
    }

    pub fn is_feasible_state(&self, t: usize, s: StateId) -> bool {
        self.feasible[t][s.0]
    }

    pub fn feasible_actions(&self, t: usize, s: StateId) -> Vec<ActionId> {
        (0..self.actions.len()).map(ActionId).filter(|&a| self.is_feasible_action(t, s, a)).collect()
    }

    /// Quanta actually delivered per stand by `a` at `(t, s)`, after the
    /// model replaces an infeasible choice.
    pub fn delivered(&self, t: usize, s: StateId, a: ActionId) -> Result<Vec<usize>> {
        let rem = self.codec.decode(s)?;
        let a = self.effective_action(t, s, a);
        Ok(self.actions[a.0]
            .iter()
            .zip(&rem)
            .enumerate()
            .map(|(i, (&c, &r))| if self.occupants[t][i].is_some() { c.min(r) } else { 0 })
            .collect())
    }

    /// The action the model executes for `a`: itself when feasible, else the
    /// feasible action sharing the most charging with it (lowest index on ties).
    pub fn effective_action(&self, t: usize, s: StateId, a: ActionId) -> ActionId {
        remap(&self.actions, |b| self.ok[t][s.0 * self.actions.len() + b], self.feasible[t][s.0], a)
    }

    pub fn is_low_price(&self, t: usize) -> bool {
        self.prices[t] < self.config.low_price_threshold
    }
}

fn remap(actions: &[Vec<usize>], ok: impl Fn(usize) -> bool, state_feasible: bool, a: ActionId) -> ActionId {
    if !state_feasible || ok(a.0) {
        return a;
    }
    let overlap = |b: usize| actions[a.0].iter().zip(&actions[b]).map(|(x, y)| x.min(y)).sum::<usize>();
    let mut best: Option<usize> = None;
    for b in (0..actions.len()).filter(|&b| ok(b)) {
        if best.is_none_or(|c| overlap(b) > overlap(c)) {
            best = Some(b);
        }
    }
    ActionId(best.expect("feasible state has a feasible action"))
}

/// Builds the charging MDP; errors when the arrival list cannot be served.
pub fn build_ev_mdp(config: EvConfig) -> Result<EvInstance> {
    build_ev_with_budget(config, DEFAULT_STATE_BUDGET)
}

pub fn build_ev_with_budget(config: EvConfig, budget: u64) -> Result<EvInstance> {
    config.validate()?;
    let states = config.num_states();
    if states > budget {
        return Err(Error::Size { states, budget });
    }
    let (accepted, rejected) = assign_stands(&config, &config.arrivals);
    let structure = Structure::new(&config, accepted);
    let initial_state = structure.initial_state();
    if !structure.feasible[0][initial_state.0] {
        return Err(Error::Infeasible("the arrival list exceeds the station capacity".into()));
    }
    let horizon = config.horizon;
    let prices: Vec<f64> = (0..=horizon).map(|t| config.price.price(t)).collect();
    let price_max = prices.iter().cloned().fold(0.0, f64::max);
    let (ns, na) = (structure.codec.num_states(), structure.actions.len());
    let scale = if price_max > 0.0 { price_max * config.station_cap as f64 } else { 1.0 };
    let mut kernels = Vec::with_capacity(horizon + 1);
    let mut rewards = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let mut rows = Vec::with_capacity(ns * na);
        let mut values = Vec::with_capacity(ns * na);
        for s in 0..ns {
            let rem = structure.codec.decode(StateId(s))?;
            for a in 0..na {
                let b = remap(&structure.actions, |b| structure.ok[t][s * na + b], structure.feasible[t][s], ActionId(a));
                let (next, delivered, _) = structure.step(t, &rem, b.0);
                rows.push(vec![(structure.codec.encode(&next)?.0, 1.0)]);
                let energy: usize = delivered.iter().sum();
                values.push((1.0 - prices[t] * energy as f64 / scale).clamp(0.0, 1.0));
            }
        }
        kernels.push(Arc::new(TransitionKernel::from_rows(ns, na, rows)?));
        rewards.push(Arc::new(RewardTable::new(ns, na, values)?));
    }
    let mdp = NonStationaryMdp::new(kernels, rewards)?;
    let Structure { codec, actions, occupants, accepted, ok, feasible } = structure;
    Ok(EvInstance { config, codec, actions, accepted, rejected, prices, mdp, initial_state, occupants, ok, feasible })
}

/// Random arrival stream: at each step `1..T`, a vehicle arrives with
/// probability `arrival_prob`, with uniform demand and a stay of the minimum
/// charging time plus uniform slack.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalProcess {
    pub arrival_prob: f64,
    pub max_slack: usize,
}

impl Default for ArrivalProcess {
    fn default() -> Self {
        Self { arrival_prob: 0.35, max_slack: 10 }
    }
}

/// Draws arrivals one by one, dropping any vehicle the station could not
/// serve together with those already admitted.
pub fn random_arrivals(config: &EvConfig, process: &ArrivalProcess, rng: &mut impl Rng) -> Result<Vec<EvArrival>> {
    if !(0.0..=1.0).contains(&process.arrival_prob) {
        return Err(Error::Config("arrival probability must lie in [0, 1]".into()));
    }
    let mut base = config.clone();
    base.arrivals.clear();
    base.validate()?;
    let mut kept: Vec<EvArrival> = Vec::new();
    for t in 1..config.horizon {
        if !rng.random_bool(process.arrival_prob) {
            continue;
        }
        let demand = rng.random_range(1..=config.max_demand);
        let stay = demand.div_ceil(config.rate_cap) + rng.random_range(0..=process.max_slack);
        let departure = (t + stay).min(config.horizon + 1);
        let demand = demand.min(config.rate_cap * (departure - t));
        let candidate = EvArrival { arrival: t, departure, demand };
        let mut trial = kept.clone();
        trial.push(candidate);
        let (accepted, rejected) = assign_stands(&base, &trial);
        if !rejected.is_empty() {
            continue;
        }
        let structure = Structure::new(&base, accepted);
        if structure.feasible[0][structure.initial_state().0] {
            kept = trial;
        }
    }
    Ok(kept)
}
