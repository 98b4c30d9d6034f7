use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{span, ActionId, NonStationaryMdp, PolicySchedule, ValueVector};

/// Default limit on policy pairs examined per window in exhaustive mode.
pub const DEFAULT_PAIR_BUDGET: u64 = 1_000_000;

const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionMethod {
    /// Every deterministic policy pair was examined; `gamma` is certified.
    Exhaustive,
    /// Random pairs only; `gamma` may underestimate the true coefficient.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContractionMode {
    Exhaustive { budget: u64 },
    Sampled { pairs: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCertificate {
    pub j: usize,
    pub gamma: f64,
    pub method: ContractionMethod,
    pub policy_pairs_examined: u64,
}

impl ContractionCertificate {
    pub fn is_certified(&self) -> bool {
        self.method == ContractionMethod::Exhaustive
    }
}

fn check_window(mdp: &NonStationaryMdp, t: usize, j: usize) -> Result<()> {
    if j == 0 {
        return Err(Error::Input("window length J must be at least 1".into()));
    }
    if t + j > mdp.horizon() + 1 {
        return Err(Error::Range(format!(
            "window of {j} steps from time {t} runs past horizon {}",
            mdp.horizon()
        )));
    }
    Ok(())
}

/// Rows of `P_t^{pi_t} ... P_{t+J-1}^{pi_{t+J-1}}` for a window policy given as
/// `actions[l][s]`.
fn window_rows(mdp: &NonStationaryMdp, t: usize, actions: &[&[ActionId]]) -> Vec<Vec<f64>> {
    let n = mdp.num_states();
    (0..n)
        .map(|s| {
            let mut dist = vec![0.0; n];
            dist[s] = 1.0;
            for (l, slice) in actions.iter().enumerate() {
                let kernel = mdp.kernel(t + l);
                let mut next = vec![0.0; n];
                for (i, &p) in dist.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (j, q) in kernel.row(i, slice[i].0).iter() {
                        next[j] += p * q;
                    }
                }
                dist = next;
            }
            dist
        })
        .collect()
}

fn overlap(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a.min(*b)).sum()
}

fn min_overlap(rows1: &[Vec<f64>], rows2: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for p in rows1 {
        for q in rows2 {
            best = best.min(overlap(p, q));
        }
    }
    best.clamp(0.0, 1.0)
}

/// Ergodicity coefficient of a policy pair over the window starting at `t`:
/// the smallest overlap `sum_j min(M1(j|s1), M2(j|s2))` over state pairs.
pub fn eta_coefficient(
    mdp: &NonStationaryMdp,
    t: usize,
    j: usize,
    pi1: &PolicySchedule,
    pi2: &PolicySchedule,
) -> Result<f64> {
    check_window(mdp, t, j)?;
    pi1.validate_for(mdp)?;
    pi2.validate_for(mdp)?;
    let a1: Vec<&[ActionId]> = (t..t + j).map(|u| pi1.slice(u)).collect();
    let a2: Vec<&[ActionId]> = (t..t + j).map(|u| pi2.slice(u)).collect();
    Ok(min_overlap(&window_rows(mdp, t, &a1), &window_rows(mdp, t, &a2)))
}

/// Contraction coefficient `gamma = 1 - min eta` over window starts and policy pairs.
pub fn contraction_coefficient(
    mdp: &NonStationaryMdp,
    j: usize,
    mode: ContractionMode,
) -> Result<ContractionCertificate> {
    check_window(mdp, 0, j)?;
    match mode {
        ContractionMode::Exhaustive { budget } => exhaustive(mdp, j, budget),
        ContractionMode::Sampled { pairs, seed } => sampled(mdp, j, pairs, seed),
    }
}

fn exhaustive(mdp: &NonStationaryMdp, j: usize, budget: u64) -> Result<ContractionCertificate> {
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    let digits = n * j;
    let policies = (na as f64).powi(digits as i32);
    let pairs = policies * policies;
    if pairs > budget as f64 {
        return Err(Error::Budget { required: pairs, budget });
    }
    let policies = policies as u64;
    let windows = mdp.horizon() + 2 - j;
    let mut min_eta: f64 = 1.0;
    let mut counter = vec![0usize; digits];
    for t in 0..windows {
        // every achievable row e_s M^pi over all window policies, deduplicated bitwise
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        counter.iter_mut().for_each(|d| *d = 0);
        for _ in 0..policies {
            let slices: Vec<Vec<ActionId>> =
                counter.chunks(n).map(|c| c.iter().map(|&a| ActionId(a)).collect()).collect();
            let refs: Vec<&[ActionId]> = slices.iter().map(|v| v.as_slice()).collect();
            for row in window_rows(mdp, t, &refs) {
                let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
                if seen.insert(key) {
                    rows.push(row);
                }
            }
            for d in counter.iter_mut() {
                *d += 1;
                if *d < na {
                    break;
                }
                *d = 0;
            }
        }
        min_eta = min_eta.min(min_overlap(&rows, &rows));
    }
    Ok(ContractionCertificate {
        j,
        gamma: (1.0 - min_eta).clamp(0.0, 1.0),
        method: ContractionMethod::Exhaustive,
        policy_pairs_examined: (policies * policies).saturating_mul(windows as u64),
    })
}

fn sampled(mdp: &NonStationaryMdp, j: usize, pairs: usize, seed: u64) -> Result<ContractionCertificate> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    if pairs == 0 {
        return Err(Error::Input("sampled mode needs at least one policy pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut min_eta: f64 = 1.0;
    for _ in 0..pairs {
        let mut draw = || {
            PolicySchedule::from_fn(horizon + 1, n, |_, _| ActionId(rng.random_range(0..na)))
        };
        let (p1, p2) = (draw(), draw());
        for t in 0..horizon + 2 - j {
            min_eta = min_eta.min(eta_coefficient(mdp, t, j, &p1, &p2)?);
        }
    }
    Ok(ContractionCertificate {
        j,
        gamma: (1.0 - min_eta).clamp(0.0, 1.0),
        method: ContractionMethod::Sampled,
        policy_pairs_examined: pairs as u64,
    })
}

/// Outcome of an empirical contraction check.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub checks: usize,
    pub violations: usize,
    /// Largest `span(L u - L v) / span(u - v)` seen.
    pub max_ratio: f64,
}

/// Checks `span(L_{t:t+J-1} u - L_{t:t+J-1} v) <= gamma span(u - v)` on random
/// pairs for every window start. Violations against a certified `gamma` are
/// reported as an error.
pub fn verify_contraction(
    mdp: &NonStationaryMdp,
    certificate: &ContractionCertificate,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<ContractionReport> {
    let j = certificate.j;
    check_window(mdp, 0, j)?;
    let n = mdp.num_states();
    let mut report = ContractionReport { checks: 0, violations: 0, max_ratio: 0.0 };
    for _ in 0..trials {
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let u = ValueVector::new((0..n).map(|_| rng.random_range(-scale..scale)).collect());
        let v = ValueVector::new((0..n).map(|_| rng.random_range(-scale..scale)).collect());
        let gap = span((&u - &v).as_slice())?;
        for t in 0..mdp.horizon() + 2 - j {
            let lu = mdp.bellman_compose(t, t + j - 1, &u)?;
            let lv = mdp.bellman_compose(t, t + j - 1, &v)?;
            let lhs = span((&lu - &lv).as_slice())?;
            report.checks += 1;
            if gap > 0.0 {
                report.max_ratio = report.max_ratio.max(lhs / gap);
            }
            if lhs > certificate.gamma * gap + VERIFY_TOL {
                report.violations += 1;
            }
        }
    }
    if report.violations > 0 && certificate.is_certified() {
        return Err(Error::InvariantViolation(format!(
            "{} of {} contraction checks exceed certified gamma {} (max ratio {})",
            report.violations, report.checks, certificate.gamma, report.max_ratio
        )));
    }
    Ok(report)
}
