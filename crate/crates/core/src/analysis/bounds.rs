use crate::error::{Error, Result};
use crate::forecast::ErrorProfile;
use crate::planner::check_bound_inputs;

/// Regret bound for MPDP split into its five terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretBound {
    pub total: f64,
    /// `T gamma^floor(k/J) D`
    pub noise_free_term: f64,
    /// `2 T eps_0`
    pub eps0_term: f64,
    /// `2 T delta_0 D`
    pub delta0_term: f64,
    /// `4 T sum_{i=0}^{ceil(k/J)-1} gamma^i B_i`
    pub geometric_term: f64,
    /// `4 T gamma^floor(k/J) R`
    pub tail_term: f64,
}

fn block_sum(eps: &[f64], delta: &[f64], d: f64, first: usize, count: usize) -> f64 {
    (first..first + count).fold(0.0, |acc, l| acc + eps[l] + delta[l] * d)
}

/// Entries `0..=ceil(k/J) J` of `eps` and `delta` are read.
fn required_len(k: usize, j: usize) -> usize {
    k.div_ceil(j) * j + 1
}

fn check_profile(eps: &[f64], delta: &[f64], need: usize) -> Result<()> {
    if eps.len() < need || delta.len() < need {
        return Err(Error::Input(format!(
            "bound needs {need} error entries, got {} eps and {} delta",
            eps.len(),
            delta.len()
        )));
    }
    if eps.iter().chain(delta).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Input("error entries must be finite and non-negative".into()));
    }
    Ok(())
}

/// Regret bound of MPDP with look-ahead `k` on horizon `T`:
///
/// `T g^n D + 2T eps_0 + 4T sum_{i=0}^{m-1} g^i B_i + 2T delta_0 D + 4T g^n R`
///
/// with `n = floor(k/J)`, `m = ceil(k/J)`, `B_i = sum_{j=1..J} (eps_{iJ+j} +
/// delta_{iJ+j} D)` and `R` the same sum over `j = 1..k%J` from `nJ`. The
/// geometric sum reads up to index `mJ`, which exceeds `k` when `J` does not
/// divide `k`; callers supply those entries explicitly.
pub fn regret_bound(
    horizon: usize,
    k: usize,
    j: usize,
    gamma: f64,
    d: f64,
    eps: &[f64],
    delta: &[f64],
) -> Result<RegretBound> {
    check_bound_inputs(j, gamma, d)?;
    check_profile(eps, delta, required_len(k, j))?;
    let tt = horizon as f64;
    let (n, m) = (k / j, k.div_ceil(j));
    let gn = gamma.powi(n as i32);
    let noise_free_term = tt * gn * d;
    let eps0_term = 2.0 * tt * eps[0];
    let delta0_term = 2.0 * tt * delta[0] * d;
    let geometric_term =
        4.0 * tt * (0..m).fold(0.0, |acc, i| acc + gamma.powi(i as i32) * block_sum(eps, delta, d, i * j + 1, j));
    let tail_term = 4.0 * tt * gn * block_sum(eps, delta, d, n * j + 1, k % j);
    Ok(RegretBound {
        total: noise_free_term + eps0_term + delta0_term + geometric_term + tail_term,
        noise_free_term,
        eps0_term,
        delta0_term,
        geometric_term,
        tail_term,
    })
}

/// Span bound on the gap between forecast and true look-ahead values over `k`
/// layers with errors at indices `1..=k`:
///
/// `2 sum_{i=0}^{m-1} g^i B_i + 2 g^n R`
///
/// with the block sums of [`regret_bound`]. Applied to `psi^_t^1 - psi~_t^1`
/// this uses the window's errors directly; for `psi^_t^0 - psi~_t^0` pass
/// `k + 1` and a profile shifted one step later.
pub fn psi_gap_bound(k: usize, j: usize, gamma: f64, d: f64, profile: &ErrorProfile) -> Result<f64> {
    check_bound_inputs(j, gamma, d)?;
    let (eps, delta) = (profile.eps(), profile.delta());
    check_profile(eps, delta, required_len(k, j))?;
    let (n, m) = (k / j, k.div_ceil(j));
    let geometric = (0..m).fold(0.0, |acc, i| acc + gamma.powi(i as i32) * block_sum(eps, delta, d, i * j + 1, j));
    Ok(2.0 * geometric + 2.0 * gamma.powi(n as i32) * block_sum(eps, delta, d, n * j + 1, k % j))
}
