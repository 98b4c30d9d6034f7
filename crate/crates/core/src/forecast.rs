//! Look-ahead forecasts `(P̂_{t+l|t}, r̂_{t+l|t})` for `l = 0..=k` and their
//! realised error.
//!
//! Total variation is measured as `(1/2) * sum |p - q|`, so kernel errors lie in
//! `[0, 1]`. Steps past the model horizon are padded: zero reward, identity
//! kernel, flagged so planners and error measurement can skip them.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};

use crate::error::{Error, Result};
use crate::mdp::{tv_distance, NonStationaryMdp, RewardTable, TransitionKernel};

/// Row-sum tolerance for forecast kernels.
pub const WINDOW_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    base_time: usize,
    kernels_hat: Vec<Arc<TransitionKernel>>,
    rewards_hat: Vec<Arc<RewardTable>>,
    padded: Vec<bool>,
}

impl ForecastWindow {
    pub fn new(
        base_time: usize,
        kernels_hat: Vec<Arc<TransitionKernel>>,
        rewards_hat: Vec<Arc<RewardTable>>,
        padded: Vec<bool>,
    ) -> Result<Self> {
        if kernels_hat.is_empty() || kernels_hat.len() != rewards_hat.len() || padded.len() != kernels_hat.len() {
            return Err(Error::Dimension(format!(
                "window has {} kernels, {} reward tables and {} padding flags",
                kernels_hat.len(),
                rewards_hat.len(),
                padded.len()
            )));
        }
        let (ns, na) = (kernels_hat[0].num_states(), kernels_hat[0].num_actions());
        for (l, (k, r)) in kernels_hat.iter().zip(&rewards_hat).enumerate() {
            if k.num_states() != ns || k.num_actions() != na || r.num_states() != ns || r.num_actions() != na {
                return Err(Error::Dimension(format!("forecast step {l} dimensions differ from step 0")));
            }
            if padded[l] && r.as_slice().iter().any(|&x| x != 0.0) {
                return Err(Error::Input(format!("padded step {l} must carry zero reward")));
            }
        }
        Ok(Self { base_time, kernels_hat, rewards_hat, padded })
    }

    pub fn base_time(&self) -> usize {
        self.base_time
    }

    /// Look-ahead length; the window covers `k + 1` steps.
    pub fn k(&self) -> usize {
        self.kernels_hat.len() - 1
    }

    pub fn num_states(&self) -> usize {
        self.kernels_hat[0].num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.kernels_hat[0].num_actions()
    }

    pub fn kernel(&self, l: usize) -> &TransitionKernel {
        &self.kernels_hat[l]
    }

    pub fn rewards(&self, l: usize) -> &RewardTable {
        &self.rewards_hat[l]
    }

    pub fn is_padded(&self, l: usize) -> bool {
        self.padded[l]
    }
}

/// Per-step error bounds `eps[l]` (rewards) and `delta[l]` (kernels, total variation).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    eps: Vec<f64>,
    delta: Vec<f64>,
}

impl ErrorProfile {
    pub fn new(eps: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        if eps.len() != delta.len() {
            return Err(Error::Input(format!("eps has {} entries, delta has {}", eps.len(), delta.len())));
        }
        if let Some(x) = eps.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Input(format!("reward error {x} must be finite and non-negative")));
        }
        if let Some(x) = delta.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Input(format!("kernel error {x} must lie in [0, 1]")));
        }
        Ok(Self { eps, delta })
    }

    pub fn zeros(len: usize) -> Self {
        Self { eps: vec![0.0; len], delta: vec![0.0; len] }
    }

    pub fn constant(len: usize, eps: f64, delta: f64) -> Result<Self> {
        Self::new(vec![eps; len], vec![delta; len])
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Appends explicit zeros up to `len` entries. Used for steps past a
    /// window's end, where forecast and truth are both truncated to zero.
    pub fn extended_with_zeros(&self, len: usize) -> Self {
        let mut out = self.clone();
        if len > out.len() {
            out.eps.resize(len, 0.0);
            out.delta.resize(len, 0.0);
        }
        out
    }

    /// True when every entry is at most the matching entry of `other` (+ `tol`).
    pub fn dominated_by(&self, other: &ErrorProfile, tol: f64) -> bool {
        self.len() <= other.len()
            && self.eps.iter().zip(&other.eps).all(|(a, b)| *a <= b + tol)
            && self.delta.iter().zip(&other.delta).all(|(a, b)| *a <= b + tol)
    }

    /// `sum_{l=first}^{first+count-1} (eps_l + delta_l * d)`; errors when the
    /// profile is too short.
    pub fn layer_error(&self, first: usize, count: usize, d: f64) -> Result<f64> {
        if count == 0 {
            return Ok(0.0);
        }
        let last = first + count - 1;
        if last >= self.len() {
            return Err(Error::Input(format!(
                "error profile has {} entries but index {last} is required",
                self.len()
            )));
        }
        Ok((first..=last).map(|l| self.eps[l] + self.delta[l] * d).sum())
    }
}

/// How the standard deviation of parameter noise depends on the look-ahead step.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSchedule {
    /// Same standard deviation at every step.
    Constant(f64),
    /// `base` at step 0 and `max(base, rate * l)` afterwards.
    Growth { base: f64, rate: f64 },
    /// Explicit per-step values.
    PerStep(Vec<f64>),
}

impl SigmaSchedule {
    pub fn sigma(&self, l: usize) -> Result<f64> {
        let s = match self {
            SigmaSchedule::Constant(s) => *s,
            SigmaSchedule::Growth { base, rate } => {
                if l == 0 {
                    *base
                } else {
                    base.max(rate * l as f64)
                }
            }
            SigmaSchedule::PerStep(v) => *v
                .get(l)
                .ok_or_else(|| Error::Input(format!("sigma schedule has no entry for step {l}")))?,
        };
        if !s.is_finite() || s < 0.0 {
            return Err(Error::Input(format!("sigma {s} at step {l} must be finite and non-negative")));
        }
        Ok(s)
    }
}

/// A model whose dynamics at each epoch are generated from one scalar parameter.
pub trait ParametricModel: Send + Sync {
    fn horizon(&self) -> usize;
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// True parameter at epoch `t`.
    fn parameter(&self, t: usize) -> f64;
    /// Projects a perturbed value back into the valid parameter domain.
    fn clamp_parameter(&self, value: f64) -> f64;
    fn kernel_for(&self, t: usize, param: f64) -> Result<TransitionKernel>;
    fn rewards_for(&self, t: usize, param: f64) -> Result<Arc<RewardTable>>;
}

/// Source of forecast windows for a planner.
pub trait ForecastProvider {
    fn forecast(&mut self, mdp: &NonStationaryMdp, t: usize, k: usize) -> Result<ForecastWindow>;

    /// True when the same inputs always produce the same window.
    fn is_deterministic(&self) -> bool;
}

fn check_base_time(mdp: &NonStationaryMdp, t: usize) -> Result<()> {
    if t > mdp.horizon() {
        return Err(Error::Index(format!("forecast base time {t} beyond horizon {}", mdp.horizon())));
    }
    Ok(())
}

/// Builds a window by calling `step` for every in-horizon offset and padding the rest.
fn build_window(
    base_time: usize,
    horizon: usize,
    k: usize,
    ns: usize,
    na: usize,
    mut step: impl FnMut(usize) -> Result<(Arc<TransitionKernel>, Arc<RewardTable>)>,
) -> Result<ForecastWindow> {
    let mut kernels = Vec::with_capacity(k + 1);
    let mut rewards = Vec::with_capacity(k + 1);
    let mut padded = Vec::with_capacity(k + 1);
    let mut pad: Option<(Arc<TransitionKernel>, Arc<RewardTable>)> = None;
    for l in 0..=k {
        if base_time + l <= horizon {
            let (kh, rh) = step(l)?;
            kernels.push(kh);
            rewards.push(rh);
            padded.push(false);
        } else {
            let (kh, rh) = pad
                .get_or_insert_with(|| {
                    (Arc::new(TransitionKernel::identity(ns, na)), Arc::new(RewardTable::zeros(ns, na)))
                })
                .clone();
            kernels.push(kh);
            rewards.push(rh);
            padded.push(true);
        }
    }
    ForecastWindow::new(base_time, kernels, rewards, padded)
}

/// The true dynamics for `t..=t+k`.
pub fn exact_forecast(mdp: &NonStationaryMdp, t: usize, k: usize) -> Result<ForecastWindow> {
    check_base_time(mdp, t)?;
    build_window(t, mdp.horizon(), k, mdp.num_states(), mdp.num_actions(), |l| {
        Ok((mdp.kernel(t + l).clone(), mdp.rewards(t + l).clone()))
    })
}

fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Randomly perturbed forecast whose realised error never exceeds `profile`.
///
/// Each reward entry moves by an independent uniform draw in `[-eps_l, eps_l]`
/// and is clamped back to `[0, 1]`. Each kernel row is mixed with a random
/// distribution at weight drawn from `[0, delta_l]`, which bounds its total
/// variation from the true row by `delta_l`.
pub fn perturbed_forecast(
    mdp: &NonStationaryMdp,
    t: usize,
    k: usize,
    profile: &ErrorProfile,
    rng: &mut impl Rng,
) -> Result<ForecastWindow> {
    check_base_time(mdp, t)?;
    if profile.len() < k + 1 {
        return Err(Error::Input(format!("profile has {} entries, window needs {}", profile.len(), k + 1)));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    build_window(t, mdp.horizon(), k, ns, na, |l| {
        let (eps, delta) = (profile.eps()[l], profile.delta()[l]);
        let truth_k = mdp.kernel(t + l);
        let truth_r = mdp.rewards(t + l);
        let kernel = if delta == 0.0 {
            truth_k.clone()
        } else {
            let mut rows = Vec::with_capacity(ns * na);
            for s in 0..ns {
                for a in 0..na {
                    let w = rng.random_range(0.0..=delta);
                    let noise = random_distribution(rng, ns);
                    let mut dense = truth_k.row(s, a).to_dense(ns);
                    for (p, q) in dense.iter_mut().zip(&noise) {
                        *p = (1.0 - w) * *p + w * q;
                    }
                    rows.push(dense.into_iter().enumerate().collect());
                }
            }
            Arc::new(TransitionKernel::from_rows(ns, na, rows)?)
        };
        let rewards = if eps == 0.0 {
            truth_r.clone()
        } else {
            let values = truth_r
                .as_slice()
                .iter()
                .map(|&r| (r + rng.random_range(-eps..=eps)).clamp(0.0, 1.0))
                .collect();
            Arc::new(RewardTable::new(ns, na, values)?)
        };
        Ok((kernel, rewards))
    })
}

/// Forecast built from a Gaussian-perturbed copy of the model's scalar parameter.
pub fn parametric_noise_forecast<M: ParametricModel + ?Sized>(
    model: &M,
    t: usize,
    k: usize,
    sigma: &SigmaSchedule,
    rng: &mut impl Rng,
) -> Result<ForecastWindow> {
    if t > model.horizon() {
        return Err(Error::Index(format!("forecast base time {t} beyond horizon {}", model.horizon())));
    }
    build_window(t, model.horizon(), k, model.num_states(), model.num_actions(), |l| {
        let sd = sigma.sigma(l)?;
        let truth = model.parameter(t + l);
        let noisy = if sd == 0.0 {
            truth
        } else {
            let normal = Normal::new(0.0, sd).map_err(|e| Error::Input(e.to_string()))?;
            model.clamp_parameter(truth + normal.sample(rng))
        };
        Ok((Arc::new(model.kernel_for(t + l, noisy)?), model.rewards_for(t + l, noisy)?))
    })
}

/// Realised `eps[l] = max |r̂ - r|` and `delta[l] = max TV(P̂, P)` over all
/// `(s, a)`; padded steps report zero.
pub fn measure_errors(window: &ForecastWindow, mdp: &NonStationaryMdp) -> Result<ErrorProfile> {
    if window.num_states() != mdp.num_states() || window.num_actions() != mdp.num_actions() {
        return Err(Error::Dimension("window and model dimensions differ".into()));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut eps = Vec::with_capacity(window.k() + 1);
    let mut delta = Vec::with_capacity(window.k() + 1);
    for l in 0..=window.k() {
        if window.is_padded(l) {
            eps.push(0.0);
            delta.push(0.0);
            continue;
        }
        let t = window.base_time() + l;
        if t > mdp.horizon() {
            return Err(Error::Index(format!("unpadded forecast step at time {t} beyond horizon")));
        }
        let (kh, rh) = (window.kernel(l), window.rewards(l));
        let (kt, rt) = (mdp.kernel(t), mdp.rewards(t));
        let mut e: f64 = 0.0;
        let mut d: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                e = e.max((rh.get(s, a) - rt.get(s, a)).abs());
                d = d.max(tv_distance(kh.row(s, a), kt.row(s, a)));
            }
        }
        eps.push(e);
        delta.push(d.min(1.0));
    }
    ErrorProfile::new(eps, delta)
}

/// Exact look-ahead.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactForecast;

impl ForecastProvider for ExactForecast {
    fn forecast(&mut self, mdp: &NonStationaryMdp, t: usize, k: usize) -> Result<ForecastWindow> {
        exact_forecast(mdp, t, k)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Perturbed look-ahead with an owned random stream.
#[derive(Debug, Clone)]
pub struct PerturbedForecast<R> {
    pub profile: ErrorProfile,
    pub rng: R,
}

impl<R: Rng> ForecastProvider for PerturbedForecast<R> {
    fn forecast(&mut self, mdp: &NonStationaryMdp, t: usize, k: usize) -> Result<ForecastWindow> {
        perturbed_forecast(mdp, t, k, &self.profile, &mut self.rng)
    }

    fn is_deterministic(&self) -> bool {
        self.profile.eps().iter().chain(self.profile.delta()).all(|&x| x == 0.0)
    }
}

/// Parameter-noise look-ahead with an owned random stream.
pub struct ParametricForecast<M: ?Sized, R> {
    pub model: Arc<M>,
    pub sigma: SigmaSchedule,
    pub rng: R,
}

impl<M: ParametricModel + ?Sized, R: Rng> ForecastProvider for ParametricForecast<M, R> {
    fn forecast(&mut self, _mdp: &NonStationaryMdp, t: usize, k: usize) -> Result<ForecastWindow> {
        parametric_noise_forecast(self.model.as_ref(), t, k, &self.sigma, &mut self.rng)
    }

    fn is_deterministic(&self) -> bool {
        match &self.sigma {
            SigmaSchedule::Constant(s) => *s == 0.0,
            SigmaSchedule::Growth { base, rate } => *base == 0.0 && *rate == 0.0,
            SigmaSchedule::PerStep(v) => v.iter().all(|&s| s == 0.0),
        }
    }
}
