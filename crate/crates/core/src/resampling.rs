//! Drawing coupled ancestor vectors from a coupling matrix.
//!
//! Both schemes invert the cumulative mass of the coupling's entries in a
//! fixed order: row-major for dense and product-form storage, `(row, col)`
//! lexicographic for sparse storage (followed by the rounding residual,
//! row-major, when present). Indices are 0-based.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::rng::unit_uniform;
use crate::simplex::{CouplingMatrix, Csr, Storage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestorPair {
    pub a1: Vec<usize>,
    pub a2: Vec<usize>,
}

impl AncestorPair {
    pub fn len(&self) -> usize {
        self.a1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a1.is_empty()
    }

    /// Number of slots whose two ancestors coincide.
    pub fn matching(&self) -> usize {
        self.a1.iter().zip(&self.a2).filter(|(x, y)| x == y).count()
    }
}

/// The fixed order in which cells are visited when inverting the CDF.
pub fn entry_ordering(coupling: &CouplingMatrix) -> Vec<(usize, usize)> {
    let n = coupling.n();
    let row_major = || (0..n).flat_map(move |i| (0..n).map(move |j| (i, j)));
    match coupling.storage() {
        Storage::Dense(_) | Storage::DiagonalPlusProduct { .. } => row_major().collect(),
        Storage::Sparse { entries, residual } => {
            let mut out: Vec<(usize, usize)> =
                (0..n).flat_map(|i| entries.row(i).0.iter().map(move |&j| (i, j))).collect();
            if residual.is_some() {
                out.extend(row_major());
            }
            out
        }
    }
}

/// Explicit cells with a running cumulative mass: row-major over an
/// `n × n` grid, or the nonzeros of a CSR matrix.
struct Explicit<'a> {
    layout: Layout<'a>,
    cum: Vec<f64>,
}

enum Layout<'a> {
    RowMajor(usize),
    Csr(&'a Csr),
}

impl Explicit<'_> {
    fn cell(&self, p: usize) -> (usize, usize) {
        match self.layout {
            Layout::RowMajor(n) => (p / n, p % n),
            Layout::Csr(csr) => (csr.row_ptr.partition_point(|&r| r <= p) - 1, csr.cols[p]),
        }
    }
}

/// `diag(diagonal) + left ⊗ right`, visited row-major.
struct Structured<'a> {
    diagonal: Option<&'a [f64]>,
    left: &'a [f64],
    right: &'a [f64],
    right_cum: Vec<f64>,
    row_cum: Vec<f64>,
}

enum Block<'a> {
    Explicit(Explicit<'a>),
    Structured(Structured<'a>),
}

fn running_sum(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// First position `p` with `cum[p] >= target`, or the last position.
fn first_reaching(cum: &[f64], target: f64) -> usize {
    cum.partition_point(|&c| c < target).min(cum.len() - 1)
}

impl<'a> Structured<'a> {
    fn new(diagonal: Option<&'a [f64]>, left: &'a [f64], right: &'a [f64]) -> Self {
        let right_total: f64 = right.iter().sum();
        let right_cum = running_sum(right.iter().copied());
        let row_cum = running_sum(
            left.iter().enumerate().map(|(i, l)| diagonal.map_or(0.0, |d| d[i]) + l * right_total),
        );
        Structured { diagonal, left, right, right_cum, row_cum }
    }

    fn total(&self) -> f64 {
        *self.row_cum.last().unwrap_or(&0.0)
    }

    fn mass(&self, i: usize, j: usize) -> f64 {
        let d = match self.diagonal {
            Some(d) if i == j => d[i],
            _ => 0.0,
        };
        d + self.left[i] * self.right[j]
    }

    fn locate(&self, target: f64) -> (usize, usize) {
        let n = self.left.len();
        let mut i = first_reaching(&self.row_cum, target);
        // Skip rows whose mass is zero (possible only at the clamp).
        while i > 0 && self.row_cum[i] == self.row_cum[i - 1] {
            i -= 1;
        }
        let before = if i == 0 { 0.0 } else { self.row_cum[i - 1] };
        let within = target - before;
        let diag = match self.diagonal {
            Some(d) => d[i],
            None => 0.0,
        };
        let reach = |j: usize| self.left[i] * self.right_cum[j] + if j >= i { diag } else { 0.0 };
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if reach(mid) < within {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let j = lo;
        if j < n && self.mass(i, j) > 0.0 {
            return (i, j);
        }
        // Rounding left `within` just above the row's reachable mass.
        let j = (0..n).rev().find(|&j| self.mass(i, j) > 0.0).unwrap_or(n - 1);
        (i, j)
    }
}

/// Cumulative-mass inverse over a coupling's entry ordering.
pub struct Locator<'a> {
    blocks: Vec<Block<'a>>,
    offsets: Vec<f64>,
    total: f64,
}

impl<'a> Locator<'a> {
    pub fn new(coupling: &'a CouplingMatrix) -> Self {
        let n = coupling.n();
        let mut blocks = Vec::new();
        match coupling.storage() {
            Storage::Dense(m) => {
                let layout = Layout::RowMajor(n);
                blocks.push(Block::Explicit(Explicit { layout, cum: running_sum(m.iter().copied()) }));
            }
            Storage::Sparse { entries, residual } => {
                let layout = Layout::Csr(entries);
                blocks.push(Block::Explicit(Explicit { layout, cum: running_sum(entries.values.iter().copied()) }));
                if let Some((l, r)) = residual {
                    blocks.push(Block::Structured(Structured::new(None, l, r)));
                }
            }
            Storage::DiagonalPlusProduct { diagonal, left, right } => {
                blocks.push(Block::Structured(Structured::new(Some(diagonal), left, right)));
            }
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut total = 0.0;
        for b in &blocks {
            offsets.push(total);
            total += match b {
                Block::Explicit(e) => *e.cum.last().unwrap_or(&0.0),
                Block::Structured(s) => s.total(),
            };
        }
        Locator { blocks, offsets, total }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// The first positive-mass cell whose cumulative mass reaches `target`.
    /// Targets beyond the total resolve to the last positive-mass cell.
    pub fn locate(&self, target: f64) -> (usize, usize) {
        let target = target.clamp(f64::MIN_POSITIVE, self.total);
        let mut k = self.offsets.partition_point(|&o| o < target).saturating_sub(1);
        // An empty trailing block cannot hold the target.
        while k > 0 && block_total(&self.blocks[k]) <= 0.0 {
            k -= 1;
        }
        let local = (target - self.offsets[k]).max(f64::MIN_POSITIVE);
        match &self.blocks[k] {
            Block::Explicit(e) => {
                let mut p = first_reaching(&e.cum, local);
                while p > 0 && e.cum[p] == e.cum[p - 1] {
                    p -= 1;
                }
                e.cell(p)
            }
            Block::Structured(s) => s.locate(local.min(s.total())),
        }
    }
}

fn block_total(b: &Block<'_>) -> f64 {
    match b {
        Block::Explicit(e) => *e.cum.last().unwrap_or(&0.0),
        Block::Structured(s) => s.total(),
    }
}

/// Systematic resampling with one shared uniform `u ∈ [0, 1)`: stratum `k`
/// takes the first cell whose cumulative mass reaches `(u + k) / n`.
pub fn systematic_resample(coupling: &CouplingMatrix, u: f64) -> AncestorPair {
    let n = coupling.n();
    let locator = Locator::new(coupling);
    let mut a1 = Vec::with_capacity(n);
    let mut a2 = Vec::with_capacity(n);
    for k in 0..n {
        let (i, j) = locator.locate((u + k as f64) / n as f64);
        a1.push(i);
        a2.push(j);
    }
    AncestorPair { a1, a2 }
}

/// Multinomial resampling from explicit uniforms, one per pair.
pub fn multinomial_resample_with(coupling: &CouplingMatrix, uniforms: &[f64]) -> AncestorPair {
    let locator = Locator::new(coupling);
    let (a1, a2) = uniforms.iter().map(|&u| locator.locate(u * locator.total())).unzip();
    AncestorPair { a1, a2 }
}

/// `n` independent pairs drawn from the coupling.
pub fn multinomial_resample<R: RngCore + ?Sized>(coupling: &CouplingMatrix, rng: &mut R) -> AncestorPair {
    let uniforms: Vec<f64> = (0..coupling.n()).map(|_| unit_uniform(rng)).collect();
    multinomial_resample_with(coupling, &uniforms)
}
