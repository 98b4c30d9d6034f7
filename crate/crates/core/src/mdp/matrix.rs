use crate::error::{Error, Result};

/// Row-sum tolerance checked on composed products.
pub const COMPOSE_TOL: f64 = 1e-10;

/// Dense row-stochastic `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self::unchecked(n, data)?;
        m.check_stochastic(COMPOSE_TOL)?;
        Ok(m)
    }

    fn unchecked(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::Dimension(format!("{} entries do not form a non-empty {n}x{n} matrix", data.len())));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn check_stochastic(&self, tol: f64) -> Result<()> {
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|&p| !(-tol..=1.0 + tol).contains(&p)) {
                return Err(Error::NotStochastic { state: i, action: 0, detail: "entry outside [0, 1]".into() });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::NotStochastic { state: i, action: 0, detail: format!("row sums to {sum}") });
            }
        }
        Ok(())
    }

    /// `self * rhs`.
    pub fn mul(&self, rhs: &TransitionMatrix) -> Result<TransitionMatrix> {
        if self.n != rhs.n {
            return Err(Error::Dimension(format!("cannot multiply {0}x{0} by {1}x{1}", self.n, rhs.n)));
        }
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(Self { n, data: out })
    }

    /// `P v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(v).map(|(p, x)| p * x).sum()).collect()
    }
}

/// Left-to-right product `M_1 M_2 ... M_m` of row-stochastic matrices.
pub fn kernel_compose(matrices: &[TransitionMatrix]) -> Result<TransitionMatrix> {
    let (first, rest) = matrices
        .split_first()
        .ok_or_else(|| Error::Dimension("cannot compose an empty sequence".into()))?;
    let mut acc = first.clone();
    for m in rest {
        acc = acc.mul(m)?;
    }
    acc.check_stochastic(COMPOSE_TOL)?;
    Ok(acc)
}
