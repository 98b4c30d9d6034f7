//! Single queue in front of heterogeneous servers with a time-varying arrival
//! rate, discretised by uniformisation: each step carries at most one event.

use std::f64::consts::PI;
use std::sync::Arc;

use mpdp_core::forecast::ParametricModel;
use mpdp_core::{ActionId, NonStationaryMdp, RewardTable, StateId, TransitionKernel};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Smallest arrival rate a noisy forecast is clamped to.
pub const ARRIVAL_FLOOR: f64 = 1e-6;

/// Default limit on `|S|`.
pub const DEFAULT_STATE_BUDGET: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalRate {
    Constant { rate: f64 },
    /// `min + (max - min) (1 + sin(2 pi t / period + phase)) / 2`
    Sinusoid { min: f64, max: f64, period: f64, #[serde(default)] phase: f64 },
    /// One entry per epoch `0..=T`.
    Listed { rates: Vec<f64> },
}

impl ArrivalRate {
    pub fn rate(&self, t: usize) -> f64 {
        match self {
            ArrivalRate::Constant { rate } => *rate,
            ArrivalRate::Sinusoid { min, max, period, phase } => {
                min + (max - min) * 0.5 * (1.0 + (2.0 * PI * t as f64 / period + phase).sin())
            }
            ArrivalRate::Listed { rates } => rates[t.min(rates.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueConfig {
    /// `mu_i` per server, fastest first is not required.
    pub service_rates: Vec<f64>,
    pub arrival: ArrivalRate,
    pub queue_cap: usize,
    pub horizon: usize,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            service_rates: vec![100.0, 10.0, 1.0],
            arrival: ArrivalRate::Sinusoid { min: 10.0, max: 100.0, period: 50.0, phase: 0.0 },
            queue_cap: 20,
            horizon: 200,
        }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.service_rates.is_empty() {
            return Err(Error::Config("at least one server is required".into()));
        }
        if self.service_rates.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Config("service rates must be positive".into()));
        }
        if self.queue_cap == 0 {
            return Err(Error::Config("queue_cap must be at least 1".into()));
        }
        if self.service_rates.len() > 20 {
            return Err(Error::Config("at most 20 servers are supported".into()));
        }
        match &self.arrival {
            ArrivalRate::Listed { rates } if rates.len() < self.horizon + 1 => {
                return Err(Error::Config(format!(
                    "listed arrival rates need {} entries, got {}",
                    self.horizon + 1,
                    rates.len()
                )))
            }
            ArrivalRate::Sinusoid { period, .. } if !(*period > 0.0) => {
                return Err(Error::Config("sinusoid period must be positive".into()))
            }
            _ => {}
        }
        for t in 0..=self.horizon {
            let r = self.arrival.rate(t);
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::Config(format!("arrival rate {r} at time {t} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn num_servers(&self) -> usize {
        self.service_rates.len()
    }

    pub fn num_states(&self) -> u64 {
        (self.queue_cap as u64 + 1) << self.num_servers()
    }

    /// One action per server plus wait.
    pub fn num_actions(&self) -> usize {
        self.num_servers() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueState {
    /// Jobs waiting, not counting those in service.
    pub queue: usize,
    pub busy: Vec<bool>,
}

/// Index `queue * 2^n + busy_mask`, bit `i` for server `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueCodec {
    num_servers: usize,
    queue_cap: usize,
}

impl QueueCodec {
    pub fn new(num_servers: usize, queue_cap: usize) -> Self {
        Self { num_servers, queue_cap }
    }

    pub fn num_states(&self) -> usize {
        (self.queue_cap + 1) << self.num_servers
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn queue_cap(&self) -> usize {
        self.queue_cap
    }

    pub fn wait_action(&self) -> ActionId {
        ActionId(self.num_servers)
    }

    pub fn encode(&self, state: &QueueState) -> Result<StateId> {
        if state.busy.len() != self.num_servers || state.queue > self.queue_cap {
            return Err(Error::Config(format!("queue state {state:?} outside the configured space")));
        }
        let mask = state.busy.iter().enumerate().fold(0usize, |m, (i, &b)| m | (usize::from(b) << i));
        Ok(StateId((state.queue << self.num_servers) | mask))
    }

    pub fn decode(&self, id: StateId) -> Result<QueueState> {
        if id.0 >= self.num_states() {
            return Err(Error::Config(format!("state {id} outside the queueing space")));
        }
        let mask = id.0 & ((1 << self.num_servers) - 1);
        Ok(QueueState { queue: id.0 >> self.num_servers, busy: (0..self.num_servers).map(|i| mask >> i & 1 == 1).collect() })
    }

    fn split(&self, s: usize) -> (usize, usize) {
        (s >> self.num_servers, s & ((1 << self.num_servers) - 1))
    }

    fn join(&self, queue: usize, mask: usize) -> usize {
        (queue << self.num_servers) | mask
    }
}

/// Queueing dynamics as a function of the arrival rate, shared by the true
/// model and by forecasts with a perturbed rate.
#[derive(Debug, Clone, Copy)]
enum Event {
    Arrival,
    Completion(f64),
    Stay,
}

/// Successors of every `(s, a)` row, sorted by target, with the event that
/// leads there; only the probabilities depend on the arrival rate.
#[derive(Debug, Clone)]
struct RowTemplate {
    num_states: usize,
    num_actions: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    events: Vec<Event>,
}

impl RowTemplate {
    fn new(codec: &QueueCodec, mu: &[f64]) -> Self {
        let n = mu.len();
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut events = Vec::new();
        for s in 0..codec.num_states() {
            let (q0, mask0) = codec.split(s);
            for a in 0..=n {
                let (q, mask) = if a < n && q0 > 0 && mask0 >> a & 1 == 0 {
                    (q0 - 1, mask0 | 1 << a)
                } else {
                    (q0, mask0)
                };
                let mut row = vec![(codec.join(q, mask), Event::Stay)];
                if q < codec.queue_cap {
                    row.push((codec.join(q + 1, mask), Event::Arrival));
                }
                for (i, &m) in mu.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        row.push((codec.join(q, mask & !(1 << i)), Event::Completion(m)));
                    }
                }
                row.sort_by_key(|&(j, _)| j);
                for (j, e) in row {
                    targets.push(j);
                    events.push(e);
                }
                offsets.push(targets.len());
            }
        }
        Self { num_states: codec.num_states(), num_actions: n + 1, offsets, targets, events }
    }
}

#[derive(Debug, Clone)]
pub struct QueueModel {
    config: QueueConfig,
    codec: QueueCodec,
    rewards: Arc<RewardTable>,
    template: RowTemplate,
}

impl QueueModel {
    pub fn new(config: QueueConfig) -> Result<Self> {
        Self::with_budget(config, DEFAULT_STATE_BUDGET)
    }

    pub fn with_budget(config: QueueConfig, budget: u64) -> Result<Self> {
        config.validate()?;
        let states = config.num_states();
        if states > budget {
            return Err(Error::Size { states, budget });
        }
        let codec = QueueCodec::new(config.num_servers(), config.queue_cap);
        let (ns, na) = (codec.num_states(), config.num_actions());
        let capacity = (config.queue_cap + config.num_servers()) as f64;
        let mut values = Vec::with_capacity(ns * na);
        for s in 0..ns {
            let (q, mask) = codec.split(s);
            let r = 1.0 - (q + mask.count_ones() as usize) as f64 / capacity;
            values.extend(std::iter::repeat_n(r, na));
        }
        let rewards = Arc::new(RewardTable::new(ns, na, values)?);
        let template = RowTemplate::new(&codec, &config.service_rates);
        Ok(Self { config, codec, rewards, template })
    }

    pub fn config(&self) -> &QueueConfig {
        &self.config
    }

    pub fn codec(&self) -> &QueueCodec {
        &self.codec
    }

    /// Dispatch on the observed state, then one uniformised event: an arrival
    /// (dropped at capacity), a completion at a busy server, or nothing.
    pub fn kernel_with_rate(&self, lambda: f64) -> Result<TransitionKernel> {
        let tpl = &self.template;
        let total = lambda + self.config.service_rates.iter().sum::<f64>();
        let mut offsets = Vec::with_capacity(tpl.offsets.len());
        let mut targets = Vec::with_capacity(tpl.targets.len());
        let mut probs = Vec::with_capacity(tpl.targets.len());
        offsets.push(0);
        for r in 0..tpl.offsets.len() - 1 {
            let range = tpl.offsets[r]..tpl.offsets[r + 1];
            // dropped arrivals and idle servers leave the state unchanged
            let moved: f64 = tpl.events[range.clone()]
                .iter()
                .map(|e| match e {
                    Event::Arrival => lambda / total,
                    Event::Completion(mu) => mu / total,
                    Event::Stay => 0.0,
                })
                .sum();
            for i in range {
                let p = match tpl.events[i] {
                    Event::Arrival => lambda / total,
                    Event::Completion(mu) => mu / total,
                    Event::Stay => (1.0 - moved).max(0.0),
                };
                if p > 0.0 {
                    targets.push(tpl.targets[i]);
                    probs.push(p);
                }
            }
            offsets.push(targets.len());
        }
        Ok(TransitionKernel::from_csr(tpl.num_states, tpl.num_actions, offsets, targets, probs)?)
    }

    pub fn rewards(&self) -> Arc<RewardTable> {
        self.rewards.clone()
    }

    /// The true model over `0..=T`.
    pub fn build(&self) -> Result<NonStationaryMdp> {
        let mut kernels = Vec::with_capacity(self.config.horizon + 1);
        let mut previous: Option<(f64, Arc<TransitionKernel>)> = None;
        for t in 0..=self.config.horizon {
            let lambda = self.config.arrival.rate(t);
            let kernel = match &previous {
                Some((l, k)) if *l == lambda => k.clone(),
                _ => Arc::new(self.kernel_with_rate(lambda)?),
            };
            previous = Some((lambda, kernel.clone()));
            kernels.push(kernel);
        }
        let rewards = vec![self.rewards.clone(); self.config.horizon + 1];
        Ok(NonStationaryMdp::new(kernels, rewards)?)
    }

    /// Empty queue, all servers idle.
    pub fn initial_state(&self) -> StateId {
        StateId(0)
    }
}

impl ParametricModel for QueueModel {
    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn num_states(&self) -> usize {
        self.codec.num_states()
    }

    fn num_actions(&self) -> usize {
        self.config.num_actions()
    }

    fn parameter(&self, t: usize) -> f64 {
        self.config.arrival.rate(t)
    }

    fn clamp_parameter(&self, value: f64) -> f64 {
        value.max(ARRIVAL_FLOOR)
    }

    fn kernel_for(&self, _t: usize, param: f64) -> mpdp_core::Result<TransitionKernel> {
        self.kernel_with_rate(param).map_err(|e| match e {
            Error::Core(c) => c,
            other => mpdp_core::Error::Input(other.to_string()),
        })
    }

    fn rewards_for(&self, _t: usize, _param: f64) -> mpdp_core::Result<Arc<RewardTable>> {
        Ok(self.rewards.clone())
    }
}

/// Builds the model and its true MDP.
pub fn build_queueing_mdp(config: QueueConfig) -> Result<(QueueModel, NonStationaryMdp)> {
    let model = QueueModel::new(config)?;
    let mdp = model.build()?;
    Ok((model, mdp))
}
