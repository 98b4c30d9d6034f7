use crate::error::{Error, Result};
use crate::mdp::{NonStationaryMdp, StateId, TransitionKernel, ValueVector};

const MISS_TOL: f64 = 1e-9;
const VERIFY_TOL: f64 = 1e-9;

/// Moving-target diameter computed by a finite-horizon hitting-time recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct DiameterEstimate {
    pub d: f64,
    /// `argmax_s V_t*(s)` for `t = 0..=T`, lowest state on ties.
    pub target_sequence: Vec<StateId>,
    /// Start times `t <= T - cutoff` were included in the maximum.
    pub cutoff: usize,
    /// Some start state may miss its targets before the horizon ends, in which
    /// case its remaining time is counted as zero and `d` is optimistic.
    pub truncated: bool,
}

/// [`diameter_with_cutoff`] with `cutoff = T / 2`.
pub fn diameter(mdp: &NonStationaryMdp, optimal_values: &[ValueVector]) -> Result<DiameterEstimate> {
    diameter_with_cutoff(mdp, optimal_values, mdp.horizon() / 2)
}

/// Expected first time `tau > 0` at which the state coincides with the target
/// `argmax V_{t+tau}*`, minimised over policies, maximised over start states
/// and start times `t <= T - cutoff`.
///
/// `optimal_values` must hold `V_t*` for at least `t = 0..=T`.
pub fn diameter_with_cutoff(
    mdp: &NonStationaryMdp,
    optimal_values: &[ValueVector],
    cutoff: usize,
) -> Result<DiameterEstimate> {
    let (n, horizon) = (mdp.num_states(), mdp.horizon());
    if optimal_values.len() < horizon + 1 {
        return Err(Error::Dependency(format!(
            "need optimal values for times 0..={horizon}, got {}",
            optimal_values.len()
        )));
    }
    if let Some(v) = optimal_values.iter().find(|v| v.len() != n) {
        return Err(Error::Dimension(format!("optimal value vector has {} entries, model has {n}", v.len())));
    }
    if cutoff > horizon {
        return Err(Error::Range(format!("cutoff {cutoff} beyond horizon {horizon}")));
    }
    let targets: Vec<StateId> = optimal_values[..=horizon].iter().map(|v| v.argmax()).collect();

    // g[s]: expected further steps from s at time u before the first target hit
    // at some time >= u; miss[s]: probability of reaching T + 1 without a hit.
    let mut g = vec![0.0; n];
    let mut miss = vec![1.0; n];
    let mut d: f64 = 0.0;
    let mut worst_miss: f64 = 0.0;
    for t in (0..=horizon).rev() {
        let kernel = mdp.kernel(t);
        // h[s]: steps from s at time t with at least one move
        let (h, h_miss) = one_step(kernel, &g, &miss);
        if t + cutoff <= horizon {
            for s in 0..n {
                d = d.max(h[s]);
                worst_miss = worst_miss.max(h_miss[s]);
            }
        }
        let target = targets[t].0;
        g = h;
        miss = h_miss;
        g[target] = 0.0;
        miss[target] = 0.0;
    }
    Ok(DiameterEstimate { d, target_sequence: targets, cutoff, truncated: worst_miss > MISS_TOL })
}

fn one_step(kernel: &TransitionKernel, g: &[f64], miss: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, na) = (kernel.num_states(), kernel.num_actions());
    let mut h = Vec::with_capacity(n);
    let mut h_miss = Vec::with_capacity(n);
    for s in 0..n {
        let mut best = f64::INFINITY;
        let mut best_miss = 1.0;
        for a in 0..na {
            let row = kernel.row(s, a);
            let value = 1.0 + row.expect(g);
            if value < best {
                best = value;
                best_miss = row.expect(miss);
            }
        }
        h.push(best);
        h_miss.push(best_miss);
    }
    (h, h_miss)
}

/// Stationary diameter: the worst minimal expected hitting time over ordered
/// state pairs, from the kernel at time 0. With `include_return` the pairs
/// `(s, s)` count too, measured as the first return after at least one step.
/// Unreachable targets give infinity.
pub fn classical_diameter(kernel: &TransitionKernel, include_return: bool) -> f64 {
    let n = kernel.num_states();
    let mut worst: f64 = 0.0;
    for target in 0..n {
        let h = hitting_times(kernel, target);
        for s in 0..n {
            if s != target {
                worst = worst.max(h[s]);
            } else if include_return {
                let ret = (0..kernel.num_actions())
                    .map(|a| 1.0 + expect_inf(kernel, s, a, &h))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(ret);
            }
        }
    }
    worst
}

/// States that can reach `target` almost surely: repeatedly discard states
/// with no action keeping the walk inside the candidate set while still
/// reaching the target.
fn proper_states(kernel: &TransitionKernel, target: usize) -> Vec<bool> {
    let (n, na) = (kernel.num_states(), kernel.num_actions());
    let mut inside = vec![true; n];
    loop {
        let safe = |s: usize, a: usize, inside: &[bool]| kernel.row(s, a).iter().all(|(j, _)| inside[j]);
        let mut reach = vec![false; n];
        reach[target] = true;
        let mut grew = true;
        while grew {
            grew = false;
            for s in 0..n {
                if reach[s] || !inside[s] {
                    continue;
                }
                if (0..na).any(|a| safe(s, a, &inside) && kernel.row(s, a).iter().any(|(j, _)| reach[j])) {
                    reach[s] = true;
                    grew = true;
                }
            }
        }
        if reach == inside {
            return inside;
        }
        inside = reach;
    }
}

fn expect_inf(kernel: &TransitionKernel, s: usize, a: usize, h: &[f64]) -> f64 {
    kernel.row(s, a).iter().map(|(j, p)| if h[j].is_infinite() { f64::INFINITY } else { p * h[j] }).sum()
}

/// Minimal expected hitting times of `target` by value iteration over the
/// states that can reach it almost surely; the rest get infinity.
fn hitting_times(kernel: &TransitionKernel, target: usize) -> Vec<f64> {
    let (n, na) = (kernel.num_states(), kernel.num_actions());
    let inside = proper_states(kernel, target);
    let mut h: Vec<f64> = inside.iter().map(|&i| if i { 0.0 } else { f64::INFINITY }).collect();
    for _ in 0..10_000_000 {
        let mut change: f64 = 0.0;
        for s in 0..n {
            if s == target || !inside[s] {
                continue;
            }
            let mut best = f64::INFINITY;
            for a in 0..na {
                let row = kernel.row(s, a);
                if row.iter().all(|(j, _)| inside[j]) {
                    best = best.min(1.0 + row.expect(&h));
                }
            }
            change = change.max((best - h[s]).abs());
            h[s] = best;
        }
        let scale = h.iter().filter(|x| x.is_finite()).fold(1.0, |m: f64, x| m.max(*x));
        if change < 1e-13 * scale {
            break;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiameterReport {
    pub max_span: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares `span(V_t*)` with `d` for every supplied epoch.
pub fn verify_diameter_bound(optimal_values: &[ValueVector], d: f64) -> Result<DiameterReport> {
    if optimal_values.is_empty() {
        return Err(Error::Dependency("no optimal values supplied".into()));
    }
    let mut max_span: f64 = 0.0;
    for v in optimal_values {
        max_span = max_span.max(v.span()?);
    }
    Ok(DiameterReport { max_span, bound: d, holds: max_span <= d + VERIFY_TOL })
}
