//! Trial execution, sweeps, certificates and sizing.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use mpdp_core::analysis::{
    contraction_coefficient, diameter, random_counterexample, regret_bound, verify_contraction,
    ContractionCertificate, ContractionReport, Counterexample, DiameterEstimate,
};
use mpdp_core::forecast::{ExactForecast, ForecastProvider, ParametricForecast, PerturbedForecast};
use mpdp_core::planner::{
    evaluate_policy_exact, mpdp_schedule, mpdp_step, sample_next, solve_optimal, OracleSolution,
};
use mpdp_core::{ActionId, NonStationaryMdp, PolicySchedule, StateId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{EnvSpec, EvaluationMode, ExperimentConfig, ForecastSpec, PlannerSpec, SweepParameter, SweepPoint};
use super::report::{RegretReport, TrialRow};
use crate::baselines::{mix64, Baseline, Policy, Target};
use crate::env::ev::{build_ev_with_budget, random_arrivals};
use crate::env::{random_ergodic_mdp, EvInstance, QueueModel};
use crate::error::{Error, Result};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "MPDP_WORKERS";

/// A built environment instance.
#[derive(Debug, Clone)]
pub enum Environment {
    Queueing { model: Arc<QueueModel>, mdp: Arc<NonStationaryMdp> },
    Ev(Arc<EvInstance>),
    Random(Arc<NonStationaryMdp>),
    Counterexample(Arc<Counterexample>),
}

impl Environment {
    /// Builds the instance for one trial; `k` sets the counterexample's delay.
    pub fn build(spec: &EnvSpec, k: Option<usize>, trial_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        match spec {
            EnvSpec::Queueing(q) => {
                let model = QueueModel::with_budget(q.to_config(), q.state_budget)?;
                let mdp = model.build()?;
                Ok(Environment::Queueing { model: Arc::new(model), mdp: Arc::new(mdp) })
            }
            EnvSpec::Ev(e) => {
                let mut config = e.to_config();
                if let Some(process) = &e.arrival_process {
                    config.arrivals = random_arrivals(&config, process, &mut rng)?;
                }
                Ok(Environment::Ev(Arc::new(build_ev_with_budget(config, e.state_budget)?)))
            }
            EnvSpec::Random(r) => {
                let seed = r.instance_seed.unwrap_or(trial_seed);
                let mdp = random_ergodic_mdp(r.num_states, r.num_actions, r.horizon, r.mixing_floor, seed)?;
                Ok(Environment::Random(Arc::new(mdp)))
            }
            EnvSpec::Counterexample(c) => {
                let k = k.or(c.k).ok_or_else(|| Error::Config("counterexample needs k".into()))?;
                Ok(Environment::Counterexample(Arc::new(random_counterexample(k, c.horizon, &mut rng)?)))
            }
        }
    }

    pub fn mdp(&self) -> &NonStationaryMdp {
        match self {
            Environment::Queueing { mdp, .. } => mdp,
            Environment::Ev(ev) => &ev.mdp,
            Environment::Random(mdp) => mdp,
            Environment::Counterexample(c) => &c.mdp,
        }
    }

    pub fn initial_state(&self) -> StateId {
        match self {
            Environment::Queueing { model, .. } => model.initial_state(),
            Environment::Ev(ev) => ev.initial_state,
            Environment::Random(_) => StateId(0),
            Environment::Counterexample(_) => Counterexample::START,
        }
    }

    pub fn target(&self) -> Target<'_> {
        match self {
            Environment::Queueing { model, .. } => Target::Queueing(model),
            Environment::Ev(ev) => Target::Ev(ev),
            other => Target::Other { num_actions: other.mdp().num_actions() },
        }
    }
}

/// An environment with its oracle and, when requested, its certificates.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub env: Environment,
    pub oracle: OracleSolution,
    /// `(J, gamma, D)` when an exhaustive contraction certificate exists.
    pub certificate: Option<(usize, f64, f64)>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig, env: Environment) -> Result<Self> {
        let oracle = solve_optimal(env.mdp());
        let certificate = match &cfg.analysis {
            Some(a) if a.j <= env.mdp().horizon() + 1 => {
                match contraction_coefficient(env.mdp(), a.j, a.contraction_mode()) {
                    Ok(cert) if cert.is_certified() => {
                        let d = diameter(env.mdp(), &oracle.v_star)?.d;
                        Some((a.j, cert.gamma, d))
                    }
                    Ok(_) | Err(mpdp_core::Error::Budget { .. }) => None,
                    Err(e) => return Err(e.into()),
                }
            }
            _ => None,
        };
        Ok(Self { env, oracle, certificate })
    }
}

/// Seed of trial `trial` under master seed `master`; independent of sweep
/// order and of the worker count.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    mix64(master ^ mix64(trial as u64 ^ 0x6d70_6470))
}

/// Random stream for forecasts (`purpose = 0`) or trajectories (`purpose = 1`)
/// at one sweep point.
fn stream(seed: u64, point: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + 2 * point as u64 + purpose);
    rng
}

fn env_is_random(cfg: &ExperimentConfig) -> bool {
    match &cfg.env {
        EnvSpec::Queueing(_) => false,
        EnvSpec::Ev(e) => e.arrival_process.is_some(),
        EnvSpec::Random(r) => r.instance_seed.is_none(),
        EnvSpec::Counterexample(_) => true,
    }
}

fn env_depends_on_point(cfg: &ExperimentConfig) -> bool {
    matches!(
        (&cfg.env, &cfg.sweep),
        (EnvSpec::Counterexample(c), Some(s)) if c.k.is_none() && s.parameter == SweepParameter::K
    )
}

fn use_exact(cfg: &ExperimentConfig, mdp: &NonStationaryMdp) -> bool {
    match cfg.evaluation.mode {
        EvaluationMode::Exact => true,
        EvaluationMode::MonteCarlo => false,
        EvaluationMode::Auto => {
            (mdp.num_states() as u64).saturating_mul(mdp.horizon() as u64 + 1) <= cfg.evaluation.state_budget
        }
    }
}

fn point_is_deterministic(cfg: &ExperimentConfig, point: &SweepPoint) -> bool {
    let planner = match point.planner {
        PlannerSpec::Mpdp { .. } => point.forecast.is_deterministic(),
        _ => true,
    };
    planner && cfg.evaluation.mode != EvaluationMode::MonteCarlo
}

/// Result of running one planner on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub achieved: f64,
    pub metrics: BTreeMap<String, f64>,
}

fn provider<'a>(
    env: &Environment,
    forecast: &ForecastSpec,
    k: usize,
    rng: ChaCha8Rng,
) -> Result<Box<dyn ForecastProvider + 'a>> {
    match forecast {
        ForecastSpec::Exact => Ok(Box::new(ExactForecast)),
        ForecastSpec::Perturbed { .. } => {
            let profile = forecast.profile(k + 1)?.expect("perturbed forecasts have a profile");
            Ok(Box::new(PerturbedForecast { profile, rng }))
        }
        ForecastSpec::Parametric { .. } => match env {
            Environment::Queueing { model, .. } => Ok(Box::new(ParametricForecast {
                model: model.clone(),
                sigma: forecast.sigma_schedule().expect("parametric forecasts have a schedule"),
                rng,
            })),
            _ => Err(Error::TypeMismatch("parametric forecasts need the queueing environment".into())),
        },
    }
}

/// Charging metrics along the (deterministic) trajectory of `policy`.
fn ev_metrics(ev: &EvInstance, mut policy: impl FnMut(usize, StateId) -> Result<ActionId>) -> Result<BTreeMap<String, f64>> {
    let mdp = &ev.mdp;
    let mut s = ev.initial_state;
    let (mut total, mut low) = (0usize, 0usize);
    for t in 0..=mdp.horizon() {
        let a = policy(t, s)?;
        let e: usize = ev.delivered(t, s, a)?.iter().sum();
        total += e;
        if ev.is_low_price(t) {
            low += e;
        }
        s = StateId(mdp.kernel(t).row(s.0, a.0).iter().next().map(|(j, _)| j).unwrap_or(s.0));
    }
    let q = ev.config.demand_quantum;
    let fraction = if total > 0 { low as f64 / total as f64 } else { 0.0 };
    Ok(BTreeMap::from([
        ("energy".to_string(), total as f64 * q),
        ("low_price_energy".to_string(), low as f64 * q),
        ("low_price_fraction".to_string(), fraction),
    ]))
}

fn trajectory(
    mdp: &NonStationaryMdp,
    s0: StateId,
    rng: &mut ChaCha8Rng,
    mut policy: impl FnMut(usize, StateId) -> Result<ActionId>,
) -> Result<f64> {
    let mut s = s0.0;
    let mut total = 0.0;
    for t in 0..=mdp.horizon() {
        let a = policy(t, StateId(s))?;
        if a.0 >= mdp.num_actions() {
            return Err(Error::Config(format!("policy chose action {} of {}", a.0, mdp.num_actions())));
        }
        total += mdp.rewards(t).get(s, a.0);
        s = sample_next(mdp, t, s, a.0, rng);
    }
    Ok(total)
}

fn schedule_from(mdp: &NonStationaryMdp, policy: &dyn Policy) -> Result<PolicySchedule> {
    let ns = mdp.num_states();
    let slices = (0..=mdp.horizon())
        .map(|t| (0..ns).map(|s| policy.act(t, StateId(s))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicySchedule::new(ns, slices)?)
}

/// Runs the point's planner on a prepared instance.
pub fn evaluate(cfg: &ExperimentConfig, prepared: &Prepared, point: &SweepPoint, seed: u64) -> Result<Outcome> {
    let env = &prepared.env;
    let mdp = env.mdp();
    let s0 = env.initial_state();
    let exact = use_exact(cfg, mdp);
    let forecast_rng = stream(seed, point.index, 0);
    let mut path_rng = stream(seed, point.index, 1);

    let baseline = point.planner.baseline().map(|spec| Baseline::bind(spec, env.target())).transpose()?;
    if exact {
        let schedule = match (point.planner, &baseline) {
            (PlannerSpec::Optimal, _) => prepared.oracle.pi_star.clone(),
            (PlannerSpec::Mpdp { k }, _) => {
                let mut p = provider(env, &point.forecast, k, forecast_rng)?;
                mpdp_schedule(mdp, p.as_mut(), k)?
            }
            (_, Some(b)) => schedule_from(mdp, b)?,
            (_, None) => unreachable!("every other planner is a baseline"),
        };
        let achieved = evaluate_policy_exact(mdp, &schedule, s0.0)?;
        let metrics = match env {
            Environment::Ev(ev) => ev_metrics(ev, |t, s| Ok(schedule.action(t, s.0)))?,
            _ => BTreeMap::new(),
        };
        return Ok(Outcome { achieved, metrics });
    }

    // Monte Carlo: plan only at the states the trajectory visits
    let mut forecasts: Option<Box<dyn ForecastProvider>> = match point.planner {
        PlannerSpec::Mpdp { k } => Some(provider(env, &point.forecast, k, forecast_rng)?),
        _ => None,
    };
    let oracle = &prepared.oracle;
    let mut visited = Vec::new();
    let mut policy = |t: usize, s: StateId| -> Result<ActionId> {
        let a = match (point.planner, &baseline, forecasts.as_mut()) {
            (PlannerSpec::Optimal, _, _) => oracle.pi_star.action(t, s.0),
            (PlannerSpec::Mpdp { k }, _, Some(p)) => mpdp_step(&p.forecast(mdp, t, k)?, s.0)?.action,
            (_, Some(b), _) => b.act(t, s)?,
            _ => unreachable!("planner and helpers are built together"),
        };
        visited.push(a);
        Ok(a)
    };
    let achieved = trajectory(mdp, s0, &mut path_rng, &mut policy)?;
    let metrics = match env {
        Environment::Ev(ev) => {
            let mut it = visited.into_iter();
            ev_metrics(ev, |_, _| Ok(it.next().expect("one action per epoch")))?
        }
        _ => BTreeMap::new(),
    };
    Ok(Outcome { achieved, metrics })
}

/// Noise-free or profile-based regret bound for the point, when certified.
pub fn point_bound(prepared: &Prepared, point: &SweepPoint) -> Result<Option<f64>> {
    let (PlannerSpec::Mpdp { k }, Some((j, gamma, d))) = (point.planner, prepared.certificate) else {
        return Ok(None);
    };
    let Some(profile) = point.forecast.profile(k + 1)? else {
        return Ok(None);
    };
    let need = k.div_ceil(j) * j + 1;
    let profile = profile.extended_with_zeros(need.max(k + 1));
    let horizon = prepared.env.mdp().horizon();
    Ok(Some(regret_bound(horizon, k, j, gamma, d, profile.eps(), profile.delta())?.total))
}

fn row(prepared: &Prepared, point: &SweepPoint, trial: usize, seed: u64, outcome: Outcome, wall: f64) -> Result<TrialRow> {
    let optimal = prepared.oracle.optimal_return(prepared.env.initial_state().0);
    Ok(TrialRow {
        trial,
        sweep_value: point.value,
        regret: optimal - outcome.achieved,
        optimal_value: optimal,
        achieved_value: outcome.achieved,
        bound: point_bound(prepared, point)?,
        seed,
        wall_time: wall,
        metrics: outcome.metrics,
    })
}

/// One trial at one sweep point, without any sharing across trials.
pub fn run_trial(cfg: &ExperimentConfig, point_index: usize, trial: usize) -> Result<TrialRow> {
    let points = cfg.points()?;
    let point = points
        .get(point_index)
        .ok_or_else(|| Error::Config(format!("sweep has no point {point_index}")))?;
    let seed = trial_seed(cfg.seed, trial);
    let start = Instant::now();
    let prepared = Prepared::new(cfg, Environment::build(&cfg.env, cfg.counterexample_k(point), seed)?)?;
    let outcome = evaluate(cfg, &prepared, point, seed)?;
    row(&prepared, point, trial, seed, outcome, start.elapsed().as_secs_f64())
}

/// Worker count from `MPDP_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RegretReport> {
    run_sweep_with(cfg, default_workers())
}

/// Runs every trial at every sweep point on `workers` threads. Rows come out
/// ordered by sweep point, then trial, whatever the scheduling.
pub fn run_sweep_with(cfg: &ExperimentConfig, workers: usize) -> Result<RegretReport> {
    cfg.validate()?;
    let points = cfg.points()?;
    let per_point_env = env_depends_on_point(cfg);
    let shared = if !env_is_random(cfg) && !per_point_env {
        let env = Environment::build(&cfg.env, cfg.counterexample_k(&points[0]), trial_seed(cfg.seed, 0))?;
        Some(Arc::new(Prepared::new(cfg, env)?))
    } else {
        None
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;

    pool.install(|| {
        // identical for every trial: compute once per point
        let cached: Vec<Option<(Outcome, f64)>> = points
            .par_iter()
            .map(|p| match &shared {
                Some(prep) if point_is_deterministic(cfg, p) => {
                    let start = Instant::now();
                    let outcome = evaluate(cfg, prep, p, trial_seed(cfg.seed, 0))?;
                    Ok(Some((outcome, start.elapsed().as_secs_f64())))
                }
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;

        let per_trial: Vec<Vec<TrialRow>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = trial_seed(cfg.seed, trial);
                let own = match (&shared, per_point_env) {
                    (None, false) => {
                        let env = Environment::build(&cfg.env, cfg.counterexample_k(&points[0]), seed)?;
                        Some(Arc::new(Prepared::new(cfg, env)?))
                    }
                    _ => None,
                };
                points
                    .iter()
                    .map(|p| {
                        let prepared = match (&shared, &own) {
                            (Some(s), _) | (None, Some(s)) => s.clone(),
                            (None, None) => {
                                let env = Environment::build(&cfg.env, cfg.counterexample_k(p), seed)?;
                                Arc::new(Prepared::new(cfg, env)?)
                            }
                        };
                        let (outcome, wall) = match &cached[p.index] {
                            Some(c) => c.clone(),
                            None => {
                                let start = Instant::now();
                                let outcome = evaluate(cfg, &prepared, p, seed)?;
                                (outcome, start.elapsed().as_secs_f64())
                            }
                        };
                        row(&prepared, p, trial, seed, outcome, wall)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let mut rows = Vec::with_capacity(cfg.trials * points.len());
        for p in 0..points.len() {
            rows.extend(per_trial.iter().map(|t| t[p].clone()));
        }
        Ok(RegretReport::from_rows(rows))
    })
}

/// Sizing of an environment, computed without building it.
#[derive(Debug, Clone, PartialEq)]
pub struct Description {
    pub kind: &'static str,
    pub num_states: u64,
    pub num_actions: u64,
    pub horizon: usize,
    /// Rough bytes for kernels and rewards over all epochs.
    pub memory_bytes: u64,
}

pub fn describe(cfg: &ExperimentConfig) -> Description {
    let (kind, ns, na, nnz_per_row) = match &cfg.env {
        EnvSpec::Queueing(q) => {
            let c = q.to_config();
            ("queueing", c.num_states(), c.num_actions() as u64, c.num_servers() as u64 + 2)
        }
        EnvSpec::Ev(e) => {
            let c = e.to_config();
            ("ev", c.num_states(), c.action_vectors().len() as u64, 1)
        }
        EnvSpec::Random(r) => ("random", r.num_states as u64, r.num_actions as u64, r.num_states as u64),
        EnvSpec::Counterexample(_) => ("counterexample", 3, 2, 1),
    };
    let horizon = cfg.horizon();
    let rows = ns.saturating_mul(na);
    // CSR entry (index + probability) plus row offset and reward
    let per_epoch = rows.saturating_mul(nnz_per_row * 16 + 16);
    Description { kind, num_states: ns, num_actions: na, horizon, memory_bytes: per_epoch.saturating_mul(horizon as u64 + 1) }
}

/// Structural analytics of the first trial's instance.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub optimal_value: f64,
    pub certificate: std::result::Result<ContractionCertificate, String>,
    pub check: Option<ContractionReport>,
    pub diameter: DiameterEstimate,
    pub max_span: f64,
}

pub fn analyze(cfg: &ExperimentConfig) -> Result<Analysis> {
    let spec = cfg.analysis.unwrap_or(super::config::AnalysisSpec {
        j: 1,
        mode: Default::default(),
        budget: mpdp_core::analysis::DEFAULT_PAIR_BUDGET,
        pairs: 200,
        seed: 0,
        trials: 200,
    });
    let points = cfg.points()?;
    let seed = trial_seed(cfg.seed, 0);
    let env = Environment::build(&cfg.env, cfg.counterexample_k(&points[0]), seed)?;
    let mdp = env.mdp();
    let oracle = solve_optimal(mdp);
    let certificate = contraction_coefficient(mdp, spec.j, spec.contraction_mode()).map_err(|e| e.to_string());
    let check = match &certificate {
        Ok(cert) => Some(verify_contraction(mdp, cert, spec.trials, &mut stream(seed, 0, 0))?),
        Err(_) => None,
    };
    let max_span = oracle
        .v_star
        .iter()
        .map(|v| v.span())
        .collect::<mpdp_core::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Analysis {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        horizon: mdp.horizon(),
        optimal_value: oracle.optimal_return(env.initial_state().0),
        certificate,
        check,
        diameter: diameter(mdp, &oracle.v_star)?,
        max_span,
    })
}
