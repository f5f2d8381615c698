//! Probability vectors on particle indices and couplings between two of them.
//!
//! Orientation is fixed throughout the crate: row index = filter-1 ancestor,
//! column index = filter-2 ancestor, so row sums reproduce the first weight
//! vector and column sums the second.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{compensated_sum, exp};
use crate::{Error, Result};

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSimplex(Vec<f64>);

impl WeightSimplex {
    pub fn uniform(n: usize) -> Self {
        WeightSimplex(vec![1.0 / n as f64; n])
    }

    /// Normalise log-weights, subtracting the maximum first.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        if log_weights.iter().any(|l| l.is_nan()) {
            return Err(Error::DegenerateWeights);
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        let raw: Vec<f64> = log_weights.iter().map(|&l| exp(l - max)).collect();
        normalize(&raw)
    }

    /// Wrap a vector already known to be nonnegative and sum to one.
    pub(crate) fn from_normalized(w: Vec<f64>) -> Self {
        WeightSimplex(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn ess(&self) -> f64 {
        ess(self)
    }
}

impl core::ops::Index<usize> for WeightSimplex {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Rescale nonnegative weights to sum to one.
pub fn normalize(raw: &[f64]) -> Result<WeightSimplex> {
    if raw.iter().any(|&w| w.is_nan() || w < 0.0 || w.is_infinite()) {
        return Err(Error::DegenerateWeights);
    }
    let total = compensated_sum(raw.iter().copied());
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    Ok(WeightSimplex(raw.iter().map(|&w| w / total).collect()))
}

/// Effective sample size `1 / Σ w_i²`.
pub fn ess(w: &WeightSimplex) -> f64 {
    1.0 / compensated_sum(w.0.iter().map(|x| x * x))
}

pub fn tv_distance(a: &WeightSimplex, b: &WeightSimplex) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let half_l1 = 0.5 * compensated_sum(a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()));
    Ok(half_l1.clamp(0.0, 1.0))
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Compressed sparse rows, columns sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, values) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => values[k],
            Err(_) => 0.0,
        }
    }
}

/// How the entries of a [`CouplingMatrix`] are held.
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Row-major `n × n`.
    Dense(Vec<f64>),
    /// Sparse entries plus an optional rank-one term `left ⊗ right`, which
    /// carries the (small) mass added when rounding a truncated Sinkhorn
    /// solution back onto the exact marginals.
    Sparse { entries: Csr, residual: Option<(Vec<f64>, Vec<f64>)> },
    /// `diag(diagonal) + left ⊗ right`. Independent and maximal couplings
    /// live here, which keeps them O(n) in memory.
    DiagonalPlusProduct { diagonal: Vec<f64>, left: Vec<f64>, right: Vec<f64> },
}

/// A joint law on `[n] × [n]` with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    storage: Storage,
    row_marginal: WeightSimplex,
    col_marginal: WeightSimplex,
}

impl CouplingMatrix {
    /// Wrap storage without checking the marginals; see
    /// [`CouplingMatrix::max_marginal_error`].
    pub fn from_parts(storage: Storage, row_marginal: WeightSimplex, col_marginal: WeightSimplex) -> Self {
        CouplingMatrix { n: row_marginal.len(), storage, row_marginal, col_marginal }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn row_marginal(&self) -> &WeightSimplex {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &WeightSimplex {
        &self.col_marginal
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[i * self.n + j],
            Storage::Sparse { entries, residual } => {
                let extra = residual.as_ref().map_or(0.0, |(l, r)| l[i] * r[j]);
                entries.get(i, j) + extra
            }
            Storage::DiagonalPlusProduct { diagonal, left, right } => {
                let d = if i == j { diagonal[i] } else { 0.0 };
                d + left[i] * right[j]
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.n;
        match &self.storage {
            Storage::Dense(m) => (0..n).map(|i| compensated_sum(m[i * n..(i + 1) * n].iter().copied())).collect(),
            Storage::Sparse { entries, residual } => (0..n)
                .map(|i| {
                    let base = compensated_sum(entries.row(i).1.iter().copied());
                    base + residual.as_ref().map_or(0.0, |(l, r)| l[i] * compensated_sum(r.iter().copied()))
                })
                .collect(),
            Storage::DiagonalPlusProduct { diagonal, left, right } => {
                let rs = compensated_sum(right.iter().copied());
                (0..n).map(|i| diagonal[i] + left[i] * rs).collect()
            }
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.n;
        match &self.storage {
            Storage::Dense(m) => (0..n).map(|j| compensated_sum((0..n).map(|i| m[i * n + j]))).collect(),
            Storage::Sparse { entries, residual } => {
                let mut sums = vec![0.0; n];
                for i in 0..n {
                    let (cols, values) = entries.row(i);
                    for (&j, &v) in cols.iter().zip(values) {
                        sums[j] += v;
                    }
                }
                if let Some((l, r)) = residual {
                    let ls = compensated_sum(l.iter().copied());
                    for (s, rj) in sums.iter_mut().zip(r) {
                        *s += ls * rj;
                    }
                }
                sums
            }
            Storage::DiagonalPlusProduct { diagonal, left, right } => {
                let ls = compensated_sum(left.iter().copied());
                (0..n).map(|j| diagonal[j] + ls * right[j]).collect()
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.row_sums())
    }

    /// Probability that both ancestors coincide.
    pub fn trace(&self) -> f64 {
        compensated_sum((0..self.n).map(|i| self.get(i, i)))
    }

    /// Largest absolute deviation of a row or column sum from its marginal.
    pub fn max_marginal_error(&self) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let r = rows.iter().zip(self.row_marginal.as_slice()).map(|(x, y)| (x - y).abs());
        let c = cols.iter().zip(self.col_marginal.as_slice()).map(|(x, y)| (x - y).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m.iter().copied().fold(f64::INFINITY, f64::min),
            _ => {
                let mut min = f64::INFINITY;
                for i in 0..self.n {
                    for j in 0..self.n {
                        min = min.min(self.get(i, j));
                    }
                }
                min
            }
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Frobenius product `⟨Π, C⟩` with a row-major dense cost.
    pub fn dot_dense(&self, cost: &[f64]) -> f64 {
        let n = self.n;
        compensated_sum((0..n * n).map(|k| {
            let (i, j) = (k / n, k % n);
            let p = self.get(i, j);
            if p == 0.0 {
                0.0
            } else {
                p * cost[k]
            }
        }))
    }
}

/// The product coupling `a ⊗ b`.
pub fn independent_coupling(a: &WeightSimplex, b: &WeightSimplex) -> Result<CouplingMatrix> {
    check_len(a.len(), b.len())?;
    let storage = Storage::DiagonalPlusProduct {
        diagonal: vec![0.0; a.len()],
        left: a.0.clone(),
        right: b.0.clone(),
    };
    Ok(CouplingMatrix::from_parts(storage, a.clone(), b.clone()))
}

/// The coupling with the largest trace: `diag(min(a, b))` plus the product of
/// the two residual measures scaled by their common mass `1 - p`.
pub fn maximal_coupling(a: &WeightSimplex, b: &WeightSimplex) -> Result<CouplingMatrix> {
    check_len(a.len(), b.len())?;
    let diagonal: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| x.min(*y)).collect();
    let left: Vec<f64> = a.0.iter().zip(&diagonal).map(|(x, m)| x - m).collect();
    let right_raw: Vec<f64> = b.0.iter().zip(&diagonal).map(|(y, m)| y - m).collect();
    let residual_mass = compensated_sum(right_raw.iter().copied());
    let (left, right) = if residual_mass > 0.0 {
        (left, right_raw.iter().map(|r| r / residual_mass).collect())
    } else {
        (vec![0.0; a.len()], vec![0.0; a.len()])
    };
    let storage = Storage::DiagonalPlusProduct { diagonal, left, right };
    Ok(CouplingMatrix::from_parts(storage, a.clone(), b.clone()))
}
