//! Experiment file schema (TOML).

use std::path::{Path, PathBuf};

use mpdp_core::analysis::{ContractionMode, DEFAULT_PAIR_BUDGET};
use mpdp_core::forecast::{ErrorProfile, SigmaSchedule};
use serde::Deserialize;

use crate::baselines::BaselineSpec;
use crate::env::ev::{ArrivalProcess, EvArrival, EvConfig, PricePath};
use crate::env::queueing::{ArrivalRate, QueueConfig};
use crate::error::{Error, Result};

/// Default threshold for RSRT: the minimiser of exact regret over the grid in
/// `configs/queueing_rsrt.toml` on the noise-free shipped queue.
pub const DEFAULT_RSRT_THRESHOLD: usize = 7;

/// Default limit on `|S| (T + 1)` for exact evaluation.
pub const DEFAULT_EXACT_BUDGET: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    pub env: EnvSpec,
    #[serde(default)]
    pub forecast: ForecastSpec,
    pub planner: PlannerSpec,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
    pub analysis: Option<AnalysisSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Queueing(QueueEnvSpec),
    Ev(EvEnvSpec),
    Random(RandomEnvSpec),
    Counterexample(CounterexampleSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueEnvSpec {
    #[serde(default = "default_service_rates")]
    pub service_rates: Vec<f64>,
    #[serde(default = "default_arrival")]
    pub arrival: ArrivalRate,
    #[serde(default = "default_queue_cap")]
    pub queue_cap: usize,
    #[serde(default = "default_queue_horizon")]
    pub horizon: usize,
    #[serde(default = "default_queue_budget")]
    pub state_budget: u64,
}

fn default_service_rates() -> Vec<f64> {
    QueueConfig::default().service_rates
}

fn default_arrival() -> ArrivalRate {
    QueueConfig::default().arrival
}

fn default_queue_cap() -> usize {
    QueueConfig::default().queue_cap
}

fn default_queue_horizon() -> usize {
    QueueConfig::default().horizon
}

fn default_queue_budget() -> u64 {
    crate::env::queueing::DEFAULT_STATE_BUDGET
}

impl QueueEnvSpec {
    pub fn to_config(&self) -> QueueConfig {
        QueueConfig {
            service_rates: self.service_rates.clone(),
            arrival: self.arrival.clone(),
            queue_cap: self.queue_cap,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvEnvSpec {
    #[serde(default = "ev_default_stands")]
    pub num_stands: usize,
    #[serde(default = "ev_default_rate_cap")]
    pub rate_cap: usize,
    #[serde(default = "ev_default_station_cap")]
    pub station_cap: usize,
    #[serde(default = "ev_default_max_demand")]
    pub max_demand: usize,
    #[serde(default = "ev_default_quantum")]
    pub demand_quantum: f64,
    #[serde(default = "ev_default_price")]
    pub price: PricePath,
    #[serde(default = "ev_default_threshold")]
    pub low_price_threshold: f64,
    #[serde(default = "ev_default_horizon")]
    pub horizon: usize,
    /// Fixed vehicles; ignored when `arrival_process` is set.
    #[serde(default)]
    pub arrivals: Vec<EvArrival>,
    /// Fresh random vehicles in every trial.
    pub arrival_process: Option<ArrivalProcess>,
    #[serde(default = "ev_default_budget")]
    pub state_budget: u64,
}

fn ev_default_stands() -> usize {
    EvConfig::default().num_stands
}
fn ev_default_rate_cap() -> usize {
    EvConfig::default().rate_cap
}
fn ev_default_station_cap() -> usize {
    EvConfig::default().station_cap
}
fn ev_default_max_demand() -> usize {
    EvConfig::default().max_demand
}
fn ev_default_quantum() -> f64 {
    EvConfig::default().demand_quantum
}
fn ev_default_price() -> PricePath {
    EvConfig::default().price
}
fn ev_default_threshold() -> f64 {
    EvConfig::default().low_price_threshold
}
fn ev_default_horizon() -> usize {
    EvConfig::default().horizon
}
fn ev_default_budget() -> u64 {
    crate::env::ev::DEFAULT_STATE_BUDGET
}

impl EvEnvSpec {
    pub fn to_config(&self) -> EvConfig {
        EvConfig {
            num_stands: self.num_stands,
            rate_cap: self.rate_cap,
            station_cap: self.station_cap,
            max_demand: self.max_demand,
            demand_quantum: self.demand_quantum,
            price: self.price.clone(),
            low_price_threshold: self.low_price_threshold,
            horizon: self.horizon,
            arrivals: self.arrivals.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEnvSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub mixing_floor: f64,
    /// One shared instance; without it every trial draws its own.
    pub instance_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSpec {
    pub horizon: usize,
    /// Reward delay; defaults to the planner's look-ahead.
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForecastSpec {
    #[default]
    Exact,
    /// Entry `l` of the profile is `eps[l]` when listed, else `eps_const`.
    Perturbed {
        #[serde(default)]
        eps: Vec<f64>,
        #[serde(default)]
        delta: Vec<f64>,
        #[serde(default)]
        eps_const: f64,
        #[serde(default)]
        delta_const: f64,
    },
    /// Gaussian noise on the model parameter with standard deviation `sigma`,
    /// or `max(sigma, growth * l)` at look-ahead step `l` when `growth` is set.
    Parametric {
        #[serde(default)]
        sigma: f64,
        growth: Option<f64>,
    },
}

impl ForecastSpec {
    /// Error profile with entries `0..len`; `None` for parameter noise.
    pub fn profile(&self, len: usize) -> Result<Option<ErrorProfile>> {
        match self {
            ForecastSpec::Exact => Ok(Some(ErrorProfile::zeros(len))),
            ForecastSpec::Perturbed { eps, delta, eps_const, delta_const } => {
                let pick = |v: &[f64], c: f64, l: usize| v.get(l).copied().unwrap_or(c);
                let e = (0..len).map(|l| pick(eps, *eps_const, l)).collect();
                let d = (0..len).map(|l| pick(delta, *delta_const, l)).collect();
                Ok(Some(ErrorProfile::new(e, d)?))
            }
            ForecastSpec::Parametric { .. } => Ok(None),
        }
    }

    pub fn sigma_schedule(&self) -> Option<SigmaSchedule> {
        match self {
            ForecastSpec::Parametric { sigma, growth: Some(g) } => {
                Some(SigmaSchedule::Growth { base: *sigma, rate: *g })
            }
            ForecastSpec::Parametric { sigma, growth: None } => Some(SigmaSchedule::Constant(*sigma)),
            _ => None,
        }
    }

    /// True when every window is the same for the same inputs.
    pub fn is_deterministic(&self) -> bool {
        match self {
            ForecastSpec::Exact => true,
            ForecastSpec::Perturbed { eps, delta, eps_const, delta_const } => {
                *eps_const == 0.0 && *delta_const == 0.0 && eps.iter().chain(delta).all(|&x| x == 0.0)
            }
            ForecastSpec::Parametric { sigma, growth } => *sigma == 0.0 && growth.is_none_or(|g| g == 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlannerSpec {
    Mpdp {
        k: usize,
    },
    Optimal,
    Fas,
    Rsrt {
        #[serde(default = "default_threshold")]
        threshold: usize,
    },
    Sllf,
    Random {
        #[serde(default)]
        seed: u64,
    },
}

fn default_threshold() -> usize {
    DEFAULT_RSRT_THRESHOLD
}

impl PlannerSpec {
    pub fn baseline(&self) -> Option<BaselineSpec> {
        match *self {
            PlannerSpec::Fas => Some(BaselineSpec::Fas),
            PlannerSpec::Rsrt { threshold } => Some(BaselineSpec::Rsrt { threshold }),
            PlannerSpec::Sllf => Some(BaselineSpec::Sllf),
            PlannerSpec::Random { seed } => Some(BaselineSpec::Random { seed }),
            PlannerSpec::Mpdp { .. } | PlannerSpec::Optimal => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            PlannerSpec::Mpdp { k } => format!("mpdp(k={k})"),
            PlannerSpec::Optimal => "optimal".into(),
            other => other.baseline().map(|b| b.label()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    K,
    Sigma,
    Growth,
    Threshold,
    Eps,
    Delta,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::K => "k",
            SweepParameter::Sigma => "sigma",
            SweepParameter::Growth => "growth",
            SweepParameter::Threshold => "threshold",
            SweepParameter::Eps => "eps",
            SweepParameter::Delta => "delta",
        }
    }
}

/// TOML integers and floats both read as `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    pub fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<Number>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    /// Exact when `|S| (T + 1)` fits the budget, else Monte Carlo.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    #[serde(default)]
    pub mode: EvaluationMode,
    #[serde(default = "default_exact_budget")]
    pub state_budget: u64,
}

fn default_exact_budget() -> u64 {
    DEFAULT_EXACT_BUDGET
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self { mode: EvaluationMode::Auto, state_budget: DEFAULT_EXACT_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMode {
    #[default]
    Exhaustive,
    Sampled,
}

/// Contraction and diameter certificates used for the `bound` column and the
/// `analyze` command.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "one")]
    pub j: usize,
    #[serde(default)]
    pub mode: CertificateMode,
    #[serde(default = "default_pair_budget")]
    pub budget: u64,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Random vector pairs per `analyze` run for the empirical contraction check.
    #[serde(default = "default_pairs")]
    pub trials: usize,
}

fn default_pair_budget() -> u64 {
    DEFAULT_PAIR_BUDGET
}

fn default_pairs() -> usize {
    200
}

impl AnalysisSpec {
    pub fn contraction_mode(&self) -> ContractionMode {
        match self.mode {
            CertificateMode::Exhaustive => ContractionMode::Exhaustive { budget: self.budget },
            CertificateMode::Sampled => ContractionMode::Sampled { pairs: self.pairs, seed: self.seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
}

/// One point of a sweep: the planner and forecast with the swept value applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub value: Option<f64>,
    pub planner: PlannerSpec,
    pub forecast: ForecastSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep values must be non-empty".into()));
            }
        }
        if let Some(a) = &self.analysis {
            if a.j == 0 {
                return Err(Error::Config("analysis j must be at least 1".into()));
            }
        }
        match &self.env {
            EnvSpec::Queueing(q) => q.to_config().validate()?,
            EnvSpec::Ev(e) => e.to_config().validate()?,
            EnvSpec::Random(r) => {
                if !(r.mixing_floor > 0.0 && r.mixing_floor <= 1.0) || r.num_states == 0 || r.num_actions == 0 {
                    return Err(Error::Config("random env needs states, actions and a floor in (0, 1]".into()));
                }
            }
            EnvSpec::Counterexample(c) => {
                if c.k.is_none() && !matches!(self.planner, PlannerSpec::Mpdp { .. }) {
                    return Err(Error::Config("counterexample env needs k unless the planner is mpdp".into()));
                }
            }
        }
        if let ForecastSpec::Parametric { sigma, growth } = &self.forecast {
            if !matches!(self.env, EnvSpec::Queueing(_)) {
                return Err(Error::Config("parametric forecasts need the queueing environment".into()));
            }
            if !(*sigma >= 0.0) || growth.is_some_and(|g| !(g >= 0.0)) {
                return Err(Error::Config("sigma and growth must be non-negative".into()));
            }
        }
        self.points()?;
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        match &self.env {
            EnvSpec::Queueing(q) => q.horizon,
            EnvSpec::Ev(e) => e.horizon,
            EnvSpec::Random(r) => r.horizon,
            EnvSpec::Counterexample(c) => c.horizon,
        }
    }

    /// Sweep points in order; a single unlabelled point without a sweep.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![SweepPoint { index: 0, value: None, planner: self.planner, forecast: self.forecast.clone() }]);
        };
        sweep
            .values
            .iter()
            .enumerate()
            .map(|(index, v)| {
                let value = v.value();
                let mut planner = self.planner;
                let mut forecast = self.forecast.clone();
                apply(sweep.parameter, value, &mut planner, &mut forecast)?;
                Ok(SweepPoint { index, value: Some(value), planner, forecast })
            })
            .collect()
    }

    /// Look-ahead used to build the counterexample for `point`.
    pub fn counterexample_k(&self, point: &SweepPoint) -> Option<usize> {
        match (&self.env, point.planner) {
            (EnvSpec::Counterexample(c), PlannerSpec::Mpdp { k }) => Some(c.k.unwrap_or(k)),
            (EnvSpec::Counterexample(c), _) => c.k,
            _ => None,
        }
    }
}

fn as_count(parameter: SweepParameter, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value < 1e9 {
        Ok(value as usize)
    } else {
        Err(Error::Config(format!("sweep value {value} for {} must be a natural number", parameter.name())))
    }
}

fn apply(parameter: SweepParameter, value: f64, planner: &mut PlannerSpec, forecast: &mut ForecastSpec) -> Result<()> {
    let mismatch = || Error::Config(format!("sweep over {} does not fit this planner/forecast", parameter.name()));
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::Config(format!("sweep value {value} must be finite and non-negative")));
    }
    match (parameter, planner, forecast) {
        (SweepParameter::K, PlannerSpec::Mpdp { k }, _) => *k = as_count(parameter, value)?,
        (SweepParameter::Threshold, PlannerSpec::Rsrt { threshold }, _) => *threshold = as_count(parameter, value)?,
        (SweepParameter::Sigma, _, ForecastSpec::Parametric { sigma, .. }) => *sigma = value,
        (SweepParameter::Growth, _, ForecastSpec::Parametric { growth, .. }) => *growth = Some(value),
        (SweepParameter::Eps, _, ForecastSpec::Perturbed { eps, eps_const, .. }) => {
            eps.clear();
            *eps_const = value;
        }
        (SweepParameter::Delta, _, ForecastSpec::Perturbed { delta, delta_const, .. }) => {
            if value > 1.0 {
                return Err(Error::Config("delta must not exceed 1".into()));
            }
            delta.clear();
            *delta_const = value;
        }
        _ => return Err(mismatch()),
    }
    Ok(())
}
