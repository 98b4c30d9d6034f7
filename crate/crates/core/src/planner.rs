//! Finite-horizon oracle and the model predictive dynamic programming (MPDP)
//! planner.
//!
//! The oracle solves the full problem by backward induction. MPDP replans at
//! every epoch `t` over a forecast window of `k + 1` steps with zero terminal
//! value, then commits to the first greedy action.

use rand::Rng;

use crate::error::{Error, Result};
use crate::forecast::{ErrorProfile, ForecastProvider, ForecastWindow};
use crate::mdp::{greedy_backup, q_value, ActionId, NonStationaryMdp, PolicySchedule, ValueVector};

/// Optimal values, Q-values and a greedy optimal schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// `v_star[t]` for `t = 0..=T+1`; `v_star[T+1]` is zero.
    pub v_star: Vec<ValueVector>,
    /// `q_star[t][s * A + a]` for `t = 0..=T`.
    pub q_star: Vec<Vec<f64>>,
    pub pi_star: PolicySchedule,
    num_actions: usize,
}

impl OracleSolution {
    pub fn value(&self, t: usize, s: usize) -> f64 {
        self.v_star[t][s]
    }

    pub fn q(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q_star[t][s * self.num_actions + a]
    }

    /// Optimal expected return from `s0` at epoch 0.
    pub fn optimal_return(&self, s0: usize) -> f64 {
        self.v_star[0][s0]
    }
}

/// Backward induction over the true model.
pub fn solve_optimal(mdp: &NonStationaryMdp) -> OracleSolution {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut v_star = vec![ValueVector::zeros(ns).with_time(horizon + 1); horizon + 2];
    let mut q_star = vec![Vec::new(); horizon + 1];
    let mut slices = vec![Vec::new(); horizon + 1];
    for t in (0..=horizon).rev() {
        let (k, r) = (mdp.kernel(t), mdp.rewards(t));
        let next = v_star[t + 1].as_slice();
        let mut q = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                q.push(q_value(k, r, next, s, a));
            }
        }
        let (values, actions) = greedy_backup(k, r, next);
        q_star[t] = q;
        slices[t] = actions;
        v_star[t] = ValueVector::new(values).with_time(t);
    }
    let pi_star = PolicySchedule::new(ns, slices).expect("oracle slices match model dimensions");
    OracleSolution { v_star, q_star, pi_star, num_actions: na }
}

/// True truncated look-ahead values `psi~_t^l`, `l = 0..=L+1` with
/// `L = min(k, T - t)`; the last entry is the zero terminal vector.
pub fn psi_tilde(mdp: &NonStationaryMdp, t: usize, k: usize) -> Result<Vec<ValueVector>> {
    if t > mdp.horizon() {
        return Err(Error::Index(format!("time {t} beyond horizon {}", mdp.horizon())));
    }
    let last = k.min(mdp.horizon() - t);
    let mut stack = vec![ValueVector::zeros(mdp.num_states()); last + 2];
    for l in (0..=last).rev() {
        let (values, _) = greedy_backup(mdp.kernel(t + l), mdp.rewards(t + l), stack[l + 1].as_slice());
        stack[l] = ValueVector::new(values).with_time(t + l);
    }
    Ok(stack)
}

/// Forecast look-ahead values `psi^_t^l`, `l = 0..=k+1`, with zero terminal.
pub fn psi_hat(window: &ForecastWindow) -> Vec<ValueVector> {
    psi_hat_with_slice(window).0
}

fn psi_hat_with_slice(window: &ForecastWindow) -> (Vec<ValueVector>, Vec<ActionId>) {
    let k = window.k();
    let mut stack = vec![ValueVector::zeros(window.num_states()); k + 2];
    let mut first = Vec::new();
    for l in (0..=k).rev() {
        let (values, actions) = greedy_backup(window.kernel(l), window.rewards(l), stack[l + 1].as_slice());
        stack[l] = ValueVector::new(values).with_time(window.base_time() + l);
        if l == 0 {
            first = actions;
        }
    }
    (stack, first)
}

/// Output of one MPDP decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub action: ActionId,
    /// `Q^_t(s, .)` from the forecast window.
    pub q_hat: Vec<f64>,
    pub psi_hat: Vec<ValueVector>,
}

/// One MPDP decision at state `s` from `window`.
pub fn mpdp_step(window: &ForecastWindow, s: usize) -> Result<PlanResult> {
    if s >= window.num_states() {
        return Err(Error::Index(format!("state {s} not below {}", window.num_states())));
    }
    let psi = psi_hat(window);
    let q_hat: Vec<f64> = (0..window.num_actions())
        .map(|a| q_value(window.kernel(0), window.rewards(0), psi[1].as_slice(), s, a))
        .collect();
    let mut best = 0;
    for a in 1..q_hat.len() {
        if q_hat[a] > q_hat[best] {
            best = a;
        }
    }
    Ok(PlanResult { action: ActionId(best), q_hat, psi_hat: psi })
}

/// MPDP decision for every state from one window.
pub fn mpdp_slice(window: &ForecastWindow) -> Vec<ActionId> {
    psi_hat_with_slice(window).1
}

/// Full MPDP schedule, one window per epoch `t = 0..=T`.
pub fn mpdp_schedule(
    mdp: &NonStationaryMdp,
    provider: &mut dyn ForecastProvider,
    k: usize,
) -> Result<PolicySchedule> {
    let mut slices = Vec::with_capacity(mdp.horizon() + 1);
    for t in 0..=mdp.horizon() {
        let window = provider.forecast(mdp, t, k)?;
        if window.num_states() != mdp.num_states() || window.num_actions() != mdp.num_actions() {
            return Err(Error::Dimension(format!("forecast at time {t} has wrong dimensions")));
        }
        slices.push(mpdp_slice(&window));
    }
    PolicySchedule::new(mdp.num_states(), slices)
}

/// `v_t^pi` for `t = 0..=T+1` by backward policy evaluation.
pub fn policy_values(mdp: &NonStationaryMdp, schedule: &PolicySchedule) -> Result<Vec<ValueVector>> {
    schedule.validate_for(mdp)?;
    let ns = mdp.num_states();
    let horizon = mdp.horizon();
    let mut out = vec![ValueVector::zeros(ns).with_time(horizon + 1); horizon + 2];
    for t in (0..=horizon).rev() {
        out[t] = mdp.bellman_apply_policy(t, schedule.slice(t), &out[t + 1])?;
    }
    Ok(out)
}

/// Expected total reward of `schedule` from `s0`.
pub fn evaluate_policy_exact(mdp: &NonStationaryMdp, schedule: &PolicySchedule, s0: usize) -> Result<f64> {
    if s0 >= mdp.num_states() {
        return Err(Error::Index(format!("initial state {s0} not below {}", mdp.num_states())));
    }
    Ok(policy_values(mdp, schedule)?[0][s0])
}

/// One sampled trajectory's total reward with actions from `policy(t, s)`.
pub fn simulate_return(
    mdp: &NonStationaryMdp,
    s0: usize,
    rng: &mut impl Rng,
    mut policy: impl FnMut(usize, usize) -> Result<ActionId>,
) -> Result<f64> {
    if s0 >= mdp.num_states() {
        return Err(Error::Index(format!("initial state {s0} not below {}", mdp.num_states())));
    }
    let mut s = s0;
    let mut total = 0.0;
    for t in 0..=mdp.horizon() {
        let a = policy(t, s)?;
        if a.0 >= mdp.num_actions() {
            return Err(Error::Index(format!("action {} not below {}", a.0, mdp.num_actions())));
        }
        total += mdp.rewards(t).get(s, a.0);
        s = sample_next(mdp, t, s, a.0, rng);
    }
    Ok(total)
}

/// Draws `s' ~ P_t(. | s, a)`.
pub fn sample_next(mdp: &NonStationaryMdp, t: usize, s: usize, a: usize, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = s;
    for (j, p) in mdp.kernel(t).row(s, a).iter() {
        acc += p;
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

/// Upper bound on `Q*_t(s, a*) - Q*_t(s, a)` for the action `a` MPDP picks:
///
/// `gamma^n span_future + 2 (eps_0 + delta_0 D) + 4 sum_{i<n} gamma^i B_i + 4 gamma^n R`
///
/// with `n = floor(k/J)`, `B_i = sum_{j=1..J} (eps_{iJ+j} + delta_{iJ+j} D)`,
/// `R` the same sum over the `k % J` trailing steps, and `span_future` a bound
/// on `span(v*_{t+k+1})`. `profile` needs entries `0..=k`.
pub fn q_gap_bound(
    k: usize,
    j: usize,
    gamma: f64,
    diameter: f64,
    span_future: f64,
    profile: &ErrorProfile,
) -> Result<f64> {
    check_bound_inputs(j, gamma, diameter)?;
    if !span_future.is_finite() || span_future < 0.0 {
        return Err(Error::Input(format!("future span {span_future} must be finite and non-negative")));
    }
    let n = k / j;
    let mut total = gamma.powi(n as i32) * span_future + 2.0 * profile.layer_error(0, 1, diameter)?;
    for i in 0..n {
        total += 4.0 * gamma.powi(i as i32) * profile.layer_error(i * j + 1, j, diameter)?;
    }
    total += 4.0 * gamma.powi(n as i32) * profile.layer_error(n * j + 1, k % j, diameter)?;
    Ok(total)
}

pub(crate) fn check_bound_inputs(j: usize, gamma: f64, diameter: f64) -> Result<()> {
    if j == 0 {
        return Err(Error::Input("block length must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Input(format!("contraction coefficient {gamma} outside [0, 1]")));
    }
    if !diameter.is_finite() || diameter < 0.0 {
        return Err(Error::Input(format!("diameter {diameter} must be finite and non-negative")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
