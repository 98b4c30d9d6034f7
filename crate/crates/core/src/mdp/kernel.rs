use crate::error::{Error, Result};

/// Row-sum tolerance enforced when a kernel is constructed.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Transition probabilities `P(s' | s, a)` for one decision epoch.
///
/// Rows are stored sparsely (compressed by `(state, action)` row) since the
/// environments of interest have only a handful of successors per pair. Rows
/// are never renormalised: a row whose mass differs from one by more than
/// [`STOCHASTIC_TOL`] is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
}

/// Borrowed view of one `(state, action)` row.
#[derive(Debug, Clone, Copy)]
pub struct KernelRow<'a> {
    pub targets: &'a [usize],
    pub probs: &'a [f64],
}

impl<'a> KernelRow<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.targets.iter().copied().zip(self.probs.iter().copied())
    }

    /// Expectation of `v` under this row.
    #[inline]
    pub fn expect(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&j, &p) in self.targets.iter().zip(self.probs) {
            acc += p * v[j];
        }
        acc
    }

    pub fn to_dense(&self, num_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states];
        for (j, p) in self.iter() {
            out[j] += p;
        }
        out
    }
}

impl TransitionKernel {
    /// Builds a kernel from sparse rows indexed by `state * num_actions + action`.
    ///
    /// Duplicate targets inside a row are merged and zero entries dropped.
    pub fn from_rows(
        num_states: usize,
        num_actions: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension("kernel needs at least one state and one action".into()));
        }
        if rows.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "expected {} rows for {} states x {} actions, got {}",
                num_states * num_actions,
                num_states,
                num_actions,
                rows.len()
            )));
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        offsets.push(0);
        for (idx, mut row) in rows.into_iter().enumerate() {
            let (state, action) = (idx / num_actions, idx % num_actions);
            row.sort_by_key(|&(j, _)| j);
            let mut sum = 0.0;
            let start = targets.len();
            for (j, p) in row {
                if j >= num_states {
                    return Err(Error::NotStochastic {
                        state,
                        action,
                        detail: format!("successor {j} out of range"),
                    });
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::NotStochastic {
                        state,
                        action,
                        detail: format!("entry {p} outside [0, 1]"),
                    });
                }
                sum += p;
                if p == 0.0 {
                    continue;
                }
                if targets.len() > start && *targets.last().unwrap() == j {
                    *probs.last_mut().unwrap() += p;
                } else {
                    targets.push(j);
                    probs.push(p);
                }
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic {
                    state,
                    action,
                    detail: format!("row sums to {sum}"),
                });
            }
            offsets.push(targets.len());
        }
        Ok(Self { num_states, num_actions, offsets, targets, probs })
    }

    /// Builds a kernel from compressed rows: row `s * A + a` owns
    /// `targets[offsets[r]..offsets[r + 1]]`, strictly increasing, with
    /// positive probabilities summing to 1.
    pub fn from_csr(
        num_states: usize,
        num_actions: usize,
        offsets: Vec<usize>,
        targets: Vec<usize>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension("kernel needs at least one state and one action".into()));
        }
        let rows = num_states * num_actions;
        if offsets.len() != rows + 1 || offsets[0] != 0 || targets.len() != probs.len() || offsets[rows] != targets.len()
        {
            return Err(Error::Dimension("compressed rows do not match the kernel shape".into()));
        }
        for r in 0..rows {
            let (state, action) = (r / num_actions, r % num_actions);
            let bad = |detail: String| Error::NotStochastic { state, action, detail };
            let (lo, hi) = (offsets[r], offsets[r + 1]);
            if hi < lo || hi > targets.len() {
                return Err(bad("row offsets decrease".into()));
            }
            let mut sum = 0.0;
            for i in lo..hi {
                if targets[i] >= num_states || (i > lo && targets[i] <= targets[i - 1]) {
                    return Err(bad(format!("successor {} out of order or range", targets[i])));
                }
                if !(probs[i] > 0.0 && probs[i] <= 1.0) {
                    return Err(bad(format!("entry {} outside (0, 1]", probs[i])));
                }
                sum += probs[i];
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(bad(format!("row sums to {sum}")));
            }
        }
        Ok(Self { num_states, num_actions, offsets, targets, probs })
    }

    /// Builds a kernel from a dense row-major `(state, action, next_state)` tensor.
    pub fn from_dense(num_states: usize, num_actions: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != num_states * num_actions * num_states {
            return Err(Error::Dimension(format!(
                "dense kernel has {} entries, expected {}",
                dense.len(),
                num_states * num_actions * num_states
            )));
        }
        let rows = dense
            .chunks(num_states)
            .map(|chunk| chunk.iter().copied().enumerate().collect())
            .collect();
        Self::from_rows(num_states, num_actions, rows)
    }

    /// Every action keeps the chain in place.
    pub fn identity(num_states: usize, num_actions: usize) -> Self {
        let n = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            offsets: (0..=n).collect(),
            targets: (0..n).map(|idx| idx / num_actions).collect(),
            probs: vec![1.0; n],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of stored non-zero entries.
    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> KernelRow<'_> {
        let idx = state * self.num_actions + action;
        let (lo, hi) = (self.offsets[idx], self.offsets[idx + 1]);
        KernelRow { targets: &self.targets[lo..hi], probs: &self.probs[lo..hi] }
    }

    /// Dense `(state, action, next_state)` tensor, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let s = self.num_states;
        let mut out = vec![0.0; s * self.num_actions * s];
        for idx in 0..s * self.num_actions {
            for k in self.offsets[idx]..self.offsets[idx + 1] {
                out[idx * s + self.targets[k]] += self.probs[k];
            }
        }
        out
    }
}

/// Total-variation distance `(1/2) * sum |p - q|` between two kernel rows.
pub fn tv_distance(p: KernelRow<'_>, q: KernelRow<'_>) -> f64 {
    // Both rows are sorted by target, so a merge walk suffices.
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < p.targets.len() || j < q.targets.len() {
        let ti = p.targets.get(i).copied().unwrap_or(usize::MAX);
        let tj = q.targets.get(j).copied().unwrap_or(usize::MAX);
        if ti == tj {
            acc += (p.probs[i] - q.probs[j]).abs();
            i += 1;
            j += 1;
        } else if ti < tj {
            acc += p.probs[i];
            i += 1;
        } else {
            acc += q.probs[j];
            j += 1;
        }
    }
    0.5 * acc
}

/// Rewards `r(s, a)` for one decision epoch, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    /// `values` is row-major `(state, action)`.
    pub fn new(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "reward table has {} entries, expected {}",
                values.len(),
                num_states * num_actions
            )));
        }
        for (idx, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::RewardRange {
                    state: idx / num_actions,
                    action: idx % num_actions,
                    value,
                });
            }
        }
        Ok(Self { num_states, num_actions, values })
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, values: vec![0.0; num_states * num_actions] }
    }

    pub fn constant(num_states: usize, num_actions: usize, c: f64) -> Result<Self> {
        Self::new(num_states, num_actions, vec![c; num_states * num_actions])
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}
