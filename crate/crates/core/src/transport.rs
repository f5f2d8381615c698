//! Entropy-regularised optimal transport between two weight vectors.
//!
//! [`sinkhorn`] and [`sparse_sinkhorn`] run the same scaling iteration over a
//! dense or a CSR Gibbs kernel. Both return a valid coupling even when the
//! iteration is stopped early: the final plan is rounded onto the exact
//! marginals by trimming rows that carry too much mass and spreading the
//! remaining deficit as a product term.
//!
//! [`exact_ot_small`] solves the unregularised problem with a two-phase
//! simplex method and is meant for checking the above on small instances.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{compensated_sum, exp, sqrt};
use crate::neighbours::{squared_distance, PointSet};
use crate::simplex::{maximal_coupling, CouplingMatrix, Csr, Storage, WeightSimplex};
use crate::{Error, Result};

/// Pairwise transport costs. Sparse storage treats absent entries as
/// forbidden (infinite cost).
#[derive(Debug, Clone, PartialEq)]
pub enum CostMatrix {
    Dense { n: usize, values: Vec<f64> },
    Sparse { n: usize, entries: Csr },
}

impl CostMatrix {
    pub fn dense(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, found: values.len() });
        }
        check_costs(&values)?;
        Ok(CostMatrix::Dense { n, values })
    }

    pub fn sparse(n: usize, entries: Csr) -> Result<Self> {
        if entries.row_ptr.len() != n + 1 {
            return Err(Error::LengthMismatch { expected: n + 1, found: entries.row_ptr.len() });
        }
        check_costs(&entries.values)?;
        Ok(CostMatrix::Sparse { n, entries })
    }

    /// `‖x1_α − x2_β‖^p` over all pairs.
    pub fn from_clouds(x1: &PointSet, x2: &PointSet, exponent: f64) -> Result<Self> {
        check_clouds(x1, x2)?;
        let n = x1.len();
        let mut values = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                values.push(ground_cost(x1.point(a), x2.point(b), exponent));
            }
        }
        Ok(CostMatrix::Dense { n, values })
    }

    /// Costs restricted to a CSR sparsity pattern.
    pub fn from_clouds_on_support(
        x1: &PointSet,
        x2: &PointSet,
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        exponent: f64,
    ) -> Result<Self> {
        check_clouds(x1, x2)?;
        let n = x1.len();
        if row_ptr.len() != n + 1 {
            return Err(Error::LengthMismatch { expected: n + 1, found: row_ptr.len() });
        }
        let mut values = Vec::with_capacity(cols.len());
        for a in 0..n {
            for &b in &cols[row_ptr[a]..row_ptr[a + 1]] {
                values.push(ground_cost(x1.point(a), x2.point(b), exponent));
            }
        }
        Ok(CostMatrix::Sparse { n, entries: Csr { row_ptr, cols, values } })
    }

    pub fn n(&self) -> usize {
        match self {
            CostMatrix::Dense { n, .. } | CostMatrix::Sparse { n, .. } => *n,
        }
    }
}

fn ground_cost(a: &[f64], b: &[f64], exponent: f64) -> f64 {
    let d2 = squared_distance(a, b);
    if exponent == 2.0 {
        d2
    } else {
        crate::math::pow(d2, 0.5 * exponent)
    }
}

fn check_costs(values: &[f64]) -> Result<()> {
    if values.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidArgument("costs must be finite and nonnegative"));
    }
    Ok(())
}

fn check_clouds(x1: &PointSet, x2: &PointSet) -> Result<()> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch { expected: x1.len(), found: x2.len() });
    }
    if x1.dim() != x2.dim() {
        return Err(Error::LengthMismatch { expected: x1.dim(), found: x2.dim() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub lambda: f64,
    /// Stop once the Euclidean norm of `(u' − u) / u` falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SinkhornConfig {
    pub fn new(lambda: f64) -> Self {
        SinkhornConfig { lambda, tolerance: 1e-3, max_iterations: 1000 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument("lambda must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: CouplingMatrix,
    pub iterations: usize,
    /// False when `max_iterations` ran out before the tolerance was met.
    pub converged: bool,
    /// The sparse problem could not be solved and the maximal coupling was
    /// returned instead.
    pub fallback: bool,
    /// Mass moved by the final rounding onto the exact marginals.
    pub rounding_mass: f64,
}

/// The Gibbs kernel `exp(−λ (C − rowmin − colmin))`, dense or sparse.
///
/// Subtracting the row minima and then the column minima of the reduced
/// cost leaves a zero in every row and column, so no row or column can
/// underflow. The discarded factors are diagonal and are absorbed into the
/// scaling vectors, which leaves the iterates of `u` unchanged up to a
/// fixed positive rescaling per row.
enum Kernel {
    Dense { n: usize, k: Vec<f64> },
    Sparse { n: usize, csr: Csr, col_ptr: Vec<usize>, col_rows: Vec<usize>, col_slot: Vec<usize> },
}

/// `exp(−x)`, flushed to zero below the normal range. Subnormal entries
/// carry no usable mass and make every product they touch very slow.
fn gibbs(x: f64) -> f64 {
    let k = exp(-x);
    if k < f64::MIN_POSITIVE {
        0.0
    } else {
        k
    }
}

impl Kernel {
    fn dense(n: usize, cost: &[f64], lambda: f64) -> Self {
        let mut reduced = cost.to_vec();
        for row in reduced.chunks_mut(n) {
            let m = row.iter().copied().fold(f64::INFINITY, f64::min);
            row.iter_mut().for_each(|c| *c -= m);
        }
        let mut col_min = vec![f64::INFINITY; n];
        for row in reduced.chunks(n) {
            for (m, &c) in col_min.iter_mut().zip(row) {
                *m = m.min(c);
            }
        }
        let k = reduced
            .chunks(n)
            .flat_map(|row| row.iter().zip(&col_min).map(|(c, m)| gibbs(lambda * (c - m))))
            .collect();
        Kernel::Dense { n, k }
    }

    fn sparse(n: usize, cost: &Csr, lambda: f64) -> Result<Self> {
        let mut values = cost.values.clone();
        let mut col_min = vec![f64::INFINITY; n];
        for a in 0..n {
            let range = cost.row_ptr[a]..cost.row_ptr[a + 1];
            if range.is_empty() {
                return Err(Error::InfeasibleSupport);
            }
            let m = values[range.clone()].iter().copied().fold(f64::INFINITY, f64::min);
            for s in range {
                values[s] -= m;
                let b = cost.cols[s];
                col_min[b] = col_min[b].min(values[s]);
            }
        }
        if col_min.iter().any(|m| m.is_infinite()) {
            return Err(Error::InfeasibleSupport);
        }
        for (s, v) in values.iter_mut().enumerate() {
            *v = gibbs(lambda * (*v - col_min[cost.cols[s]]));
        }
        // Column-major index for the transposed product, rows ascending
        // within each column.
        let mut col_ptr = vec![0usize; n + 1];
        for &b in &cost.cols {
            col_ptr[b + 1] += 1;
        }
        for b in 0..n {
            col_ptr[b + 1] += col_ptr[b];
        }
        let mut fill = col_ptr.clone();
        let mut col_rows = vec![0usize; cost.cols.len()];
        let mut col_slot = vec![0usize; cost.cols.len()];
        for a in 0..n {
            for s in cost.row_ptr[a]..cost.row_ptr[a + 1] {
                let b = cost.cols[s];
                col_rows[fill[b]] = a;
                col_slot[fill[b]] = s;
                fill[b] += 1;
            }
        }
        let csr = Csr { row_ptr: cost.row_ptr.clone(), cols: cost.cols.clone(), values };
        Ok(Kernel::Sparse { n, csr, col_ptr, col_rows, col_slot })
    }

    /// `K x`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Dense { n, k } => {
                for (o, row) in out.iter_mut().zip(k.chunks(*n)) {
                    *o = dot(row, x);
                }
            }
            Kernel::Sparse { n, csr, .. } => {
                for (a, o) in out.iter_mut().enumerate().take(*n) {
                    let (cols, vals) = csr.row(a);
                    let mut s = 0.0;
                    for (&b, kv) in cols.iter().zip(vals) {
                        s += kv * x[b];
                    }
                    *o = s;
                }
            }
        }
    }

    /// `u = a / (K ratio)` followed by `Kᵀ u`. The dense kernel does both in
    /// one sweep over its rows.
    fn half_step(&self, ratio: &[f64], a: &[f64], u: &mut [f64], kt_u: &mut [f64]) -> Result<()> {
        match self {
            Kernel::Dense { n, k } => {
                kt_u.iter_mut().for_each(|o| *o = 0.0);
                for ((row, &target), ua) in k.chunks(*n).zip(a).zip(u.iter_mut()) {
                    *ua = divide(target, dot(row, ratio))?;
                    if *ua != 0.0 {
                        for (o, kv) in kt_u.iter_mut().zip(row) {
                            *o += kv * *ua;
                        }
                    }
                }
                Ok(())
            }
            Kernel::Sparse { .. } => {
                self.apply(ratio, kt_u);
                scale_into(a, kt_u, u)?;
                self.apply_transpose(u, kt_u);
                Ok(())
            }
        }
    }

    /// `Kᵀ x`, each output accumulated over rows in ascending order.
    fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Dense { n, k } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (row, &xa) in k.chunks(*n).zip(x) {
                    for (o, kv) in out.iter_mut().zip(row) {
                        *o += kv * xa;
                    }
                }
            }
            Kernel::Sparse { csr, col_ptr, col_rows, col_slot, .. } => {
                for (b, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for p in col_ptr[b]..col_ptr[b + 1] {
                        s += csr.values[col_slot[p]] * x[col_rows[p]];
                    }
                    *o = s;
                }
            }
        }
    }
}

/// `p / q` with `0 / anything = 0`. A positive numerator over a zero
/// denominator means the support cannot carry the marginal; an overflowing
/// quotient is treated the same way.
fn divide(p: f64, q: f64) -> Result<f64> {
    if p == 0.0 {
        return Ok(0.0);
    }
    let r = p / q;
    if q > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::InfeasibleSupport)
    }
}

fn scale_into(num: &[f64], den: &[f64], out: &mut [f64]) -> Result<()> {
    for ((o, &p), &q) in out.iter_mut().zip(num).zip(den) {
        *o = divide(p, q)?;
    }
    Ok(())
}

/// Dot product over four interleaved partial sums, combined as
/// `(s0 + s1) + (s2 + s3)` and then the tail in order.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let xs = x.chunks_exact(4);
    let ys = y.chunks_exact(4);
    let (xr, yr) = (xs.remainder(), ys.remainder());
    for (p, q) in xs.zip(ys) {
        for l in 0..4 {
            acc[l] += p[l] * q[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (p, q) in xr.iter().zip(yr) {
        s += p * q;
    }
    s
}

struct Scaling {
    u: Vec<f64>,
    v: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn iterate(kernel: &Kernel, a: &[f64], b: &[f64], cfg: &SinkhornConfig) -> Result<Scaling> {
    let n = a.len();
    let mut u = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut kt_u = vec![0.0; n];
    let mut kt_next = vec![0.0; n];
    let mut ratio = vec![0.0; n];
    kernel.apply_transpose(&u, &mut kt_u);
    let mut iterations = 0;
    let mut converged = false;
    // A zero denominator part-way through means the scalings have run out
    // of floating-point range. Keep the last iterate whose `Kᵀu` was usable
    // and let the rounding repair the marginals.
    while iterations < cfg.max_iterations {
        if scale_into(b, &kt_u, &mut ratio).is_err() {
            if iterations == 0 {
                return Err(Error::InfeasibleSupport);
            }
            core::mem::swap(&mut u, &mut next);
            core::mem::swap(&mut kt_u, &mut kt_next);
            break;
        }
        if kernel.half_step(&ratio, a, &mut next, &mut kt_next).is_err() {
            break;
        }
        iterations += 1;
        let mut change = 0.0;
        for (new, old) in next.iter().zip(&u) {
            if *old > 0.0 {
                let r = (new - old) / old;
                change += r * r;
            } else if *new > 0.0 {
                change = f64::INFINITY;
            }
        }
        core::mem::swap(&mut u, &mut next);
        core::mem::swap(&mut kt_u, &mut kt_next);
        if sqrt(change) <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    let mut v = vec![0.0; n];
    scale_into(b, &kt_u, &mut v)?;
    Ok(Scaling { u, v, iterations, converged })
}

/// Trim rows above their marginal. Returns the row deficits of the trimmed
/// plan and their total; `row_scale[α]` receives the factor applied to row α.
fn rounding_deficits(a: &[f64], rows: &[f64], row_scale: &mut [f64]) -> (Vec<f64>, f64) {
    let mut row_deficit = Vec::with_capacity(a.len());
    for ((&target, &have), scale) in a.iter().zip(rows).zip(row_scale.iter_mut()) {
        *scale = if have > target { target / have } else { 1.0 };
        row_deficit.push((target - have * *scale).max(0.0));
    }
    let total = compensated_sum(row_deficit.iter().copied());
    (row_deficit, total)
}

/// Column deficits normalised to a probability vector, so that adding
/// `row_deficit ⊗ result` restores both marginals.
fn column_deficit(b: &[f64], cols: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = b.iter().zip(cols).map(|(t, h)| (t - h).max(0.0)).collect();
    let s = compensated_sum(raw.iter().copied());
    if s > 0.0 {
        raw.iter().map(|r| r / s).collect()
    } else {
        raw
    }
}

fn validate_inputs(n: usize, a: &WeightSimplex, b: &WeightSimplex) -> Result<()> {
    if a.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: a.len() });
    }
    if b.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: b.len() });
    }
    Ok(())
}

/// Dense Sinkhorn scaling.
pub fn sinkhorn(cost: &CostMatrix, a: &WeightSimplex, b: &WeightSimplex, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let CostMatrix::Dense { n, values } = cost else {
        return Err(Error::InvalidArgument("sinkhorn expects a dense cost matrix"));
    };
    let n = *n;
    validate_inputs(n, a, b)?;
    let kernel = Kernel::dense(n, values, cfg.lambda);
    let Kernel::Dense { k, .. } = &kernel else { unreachable!() };
    if k.iter().any(|x| x.is_nan()) {
        return Err(Error::RegularizationTooStrong);
    }
    let scaling = iterate(&kernel, a.as_slice(), b.as_slice(), cfg).map_err(|e| match e {
        Error::InfeasibleSupport => Error::RegularizationTooStrong,
        other => other,
    })?;

    let mut plan: Vec<f64> = k
        .chunks(n)
        .zip(&scaling.u)
        .flat_map(|(row, &ua)| row.iter().zip(&scaling.v).map(move |(kv, vb)| ua * kv * vb))
        .collect();
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(Error::RegularizationTooStrong);
    }
    let rows: Vec<f64> = plan.chunks(n).map(|r| compensated_sum(r.iter().copied())).collect();
    let mut row_scale = vec![1.0; n];
    let (row_deficit, total) = rounding_deficits(a.as_slice(), &rows, &mut row_scale);
    for (row, s) in plan.chunks_mut(n).zip(&row_scale) {
        if *s != 1.0 {
            row.iter_mut().for_each(|x| *x *= s);
        }
    }
    if total > 0.0 {
        let cols: Vec<f64> = (0..n).map(|j| compensated_sum((0..n).map(|i| plan[i * n + j]))).collect();
        let col_deficit = column_deficit(b.as_slice(), &cols);
        for (row, da) in plan.chunks_mut(n).zip(&row_deficit) {
            for (x, db) in row.iter_mut().zip(&col_deficit) {
                *x += da * db;
            }
        }
    }
    Ok(TransportPlan {
        coupling: CouplingMatrix::from_parts(Storage::Dense(plan), a.clone(), b.clone()),
        iterations: scaling.iterations,
        converged: scaling.converged,
        fallback: false,
        rounding_mass: total,
    })
}

/// Sinkhorn scaling restricted to the sparse support of `cost`.
///
/// An empty row or column in the support is an error. If the iteration
/// breaks down on a zero denominator, the maximal coupling is returned with
/// `fallback` set. Running out of iterations is not a failure: the plan is
/// rounded onto the marginals like the dense one and `converged` is false.
pub fn sparse_sinkhorn(
    cost: &CostMatrix,
    a: &WeightSimplex,
    b: &WeightSimplex,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    let CostMatrix::Sparse { n, entries } = cost else {
        return Err(Error::InvalidArgument("sparse_sinkhorn expects a sparse cost matrix"));
    };
    let n = *n;
    validate_inputs(n, a, b)?;
    let kernel = Kernel::sparse(n, entries, cfg.lambda)?;
    let fallback = || -> Result<TransportPlan> {
        Ok(TransportPlan {
            coupling: maximal_coupling(a, b)?,
            iterations: 0,
            converged: false,
            fallback: true,
            rounding_mass: 0.0,
        })
    };
    let scaling = match iterate(&kernel, a.as_slice(), b.as_slice(), cfg) {
        Ok(s) => s,
        Err(Error::InfeasibleSupport) => return fallback(),
        Err(e) => return Err(e),
    };
    let Kernel::Sparse { csr, .. } = kernel else { unreachable!() };
    let mut values = csr.values;
    for i in 0..n {
        for s in csr.row_ptr[i]..csr.row_ptr[i + 1] {
            values[s] = scaling.u[i] * values[s] * scaling.v[csr.cols[s]];
        }
    }
    if values.iter().any(|x| !x.is_finite()) {
        return fallback();
    }
    let rows: Vec<f64> =
        (0..n).map(|i| compensated_sum(values[csr.row_ptr[i]..csr.row_ptr[i + 1]].iter().copied())).collect();
    let mut row_scale = vec![1.0; n];
    let (row_deficit, total) = rounding_deficits(a.as_slice(), &rows, &mut row_scale);
    for i in 0..n {
        if row_scale[i] != 1.0 {
            values[csr.row_ptr[i]..csr.row_ptr[i + 1]].iter_mut().for_each(|x| *x *= row_scale[i]);
        }
    }
    let entries = Csr { row_ptr: csr.row_ptr, cols: csr.cols, values };
    let residual = if total > 0.0 {
        // Column sums gathered in row order, matching the dense path.
        let mut cols = vec![0.0; n];
        let mut per_col: Vec<Vec<f64>> = vec![Vec::new(); n];
        for i in 0..n {
            let (c, v) = entries.row(i);
            for (&j, &x) in c.iter().zip(v) {
                per_col[j].push(x);
            }
        }
        for (s, list) in cols.iter_mut().zip(per_col) {
            *s = compensated_sum(list);
        }
        Some((row_deficit, column_deficit(b.as_slice(), &cols)))
    } else {
        None
    };
    Ok(TransportPlan {
        coupling: CouplingMatrix::from_parts(Storage::Sparse { entries, residual }, a.clone(), b.clone()),
        iterations: scaling.iterations,
        converged: scaling.converged,
        fallback: false,
        rounding_mass: total,
    })
}

pub const EXACT_OT_MAX_N: usize = 16;

/// Exact optimal transport for `n ≤ 16` by two-phase simplex with Bland's
/// rule. Returns the optimal plan and its cost `⟨Π, C⟩`.
pub fn exact_ot_small(cost: &CostMatrix, a: &WeightSimplex, b: &WeightSimplex) -> Result<(CouplingMatrix, f64)> {
    let CostMatrix::Dense { n, values } = cost else {
        return Err(Error::InvalidArgument("exact_ot_small expects a dense cost matrix"));
    };
    let n = *n;
    if n > EXACT_OT_MAX_N {
        return Err(Error::ProblemTooLarge { n, max: EXACT_OT_MAX_N });
    }
    validate_inputs(n, a, b)?;
    let rhs: Vec<f64> = a.as_slice().iter().chain(b.as_slice()).copied().collect();
    let x = transport_simplex(n, values, &rhs);
    let coupling = CouplingMatrix::from_parts(Storage::Dense(x), a.clone(), b.clone());
    let total = coupling.dot_dense(values);
    Ok((coupling, total))
}

/// Dense tableau simplex for `min ⟨C, x⟩` s.t. row sums = rhs[..n], column
/// sums = rhs[n..], x ≥ 0.
fn transport_simplex(n: usize, cost: &[f64], rhs: &[f64]) -> Vec<f64> {
    const EPS: f64 = 1e-13;
    let vars = n * n;
    let m = 2 * n;
    let width = vars + m + 1; // structural, artificial, rhs
    let mut t = vec![0.0; m * width];
    for i in 0..n {
        for j in 0..n {
            t[i * width + i * n + j] = 1.0;
            t[(n + i) * width + j * n + i] = 1.0;
        }
    }
    for r in 0..m {
        t[r * width + vars + r] = 1.0;
        t[r * width + width - 1] = rhs[r];
    }
    let mut basis: Vec<usize> = (vars..vars + m).collect();

    let pivot = |t: &mut [f64], basis: &mut [usize], row: usize, col: usize| {
        let p = t[row * width + col];
        for k in 0..width {
            t[row * width + k] /= p;
        }
        for r in 0..m {
            if r != row {
                let f = t[r * width + col];
                if f != 0.0 {
                    for k in 0..width {
                        t[r * width + k] -= f * t[row * width + k];
                    }
                }
            }
        }
        basis[row] = col;
    };

    // Runs Bland's-rule simplex on objective `obj` over columns `< allowed`.
    let run = |t: &mut [f64], basis: &mut [usize], obj: &[f64], allowed: usize| loop {
        let reduced = |j: usize, t: &[f64], basis: &[usize]| {
            let mut z = obj[j];
            for (r, &bv) in basis.iter().enumerate() {
                z -= obj[bv] * t[r * width + j];
            }
            z
        };
        let Some(enter) = (0..allowed).find(|&j| !basis.contains(&j) && reduced(j, t, basis) < -EPS) else {
            return;
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let coef = t[r * width + enter];
            if coef > EPS {
                let ratio = t[r * width + width - 1] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - EPS || (ratio <= lratio + EPS && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else { return }; // unbounded cannot happen here
        pivot(t, basis, row, enter);
    };

    let mut phase1 = vec![0.0; vars + m];
    phase1[vars..].iter_mut().for_each(|c| *c = 1.0);
    run(&mut t, &mut basis, &phase1, vars + m);

    // Drive zero-level artificials out of the basis where possible.
    for r in 0..m {
        if basis[r] >= vars {
            if let Some(col) = (0..vars).find(|&j| !basis.contains(&j) && t[r * width + j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, r, col);
            }
        }
    }

    let mut phase2 = vec![0.0; vars + m];
    phase2[..vars].copy_from_slice(cost);
    run(&mut t, &mut basis, &phase2, vars);

    let mut x = vec![0.0; vars];
    for (r, &bv) in basis.iter().enumerate() {
        if bv < vars {
            x[bv] = t[r * width + width - 1].max(0.0);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{independent_coupling, normalize};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn w(v: &[f64]) -> WeightSimplex {
        normalize(v).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (PointSet, PointSet, WeightSimplex, WeightSimplex) {
        let x1 = PointSet::new((0..2 * n).map(|_| rng.gen::<f64>()).collect(), 2).unwrap();
        let x2 = PointSet::new((0..2 * n).map(|_| rng.gen::<f64>()).collect(), 2).unwrap();
        let a = w(&(0..n).map(|_| rng.gen::<f64>() + 0.05).collect::<Vec<_>>());
        let b = w(&(0..n).map(|_| rng.gen::<f64>() + 0.05).collect::<Vec<_>>());
        (x1, x2, a, b)
    }

    fn full_support(n: usize) -> (Vec<usize>, Vec<usize>) {
        let row_ptr = (0..=n).map(|i| i * n).collect();
        let cols = (0..n).flat_map(|_| 0..n).collect();
        (row_ptr, cols)
    }

    #[test]
    fn single_atom() {
        let c = CostMatrix::dense(1, vec![3.0]).unwrap();
        let one = w(&[1.0]);
        let plan = sinkhorn(&c, &one, &one, &SinkhornConfig::new(10.0)).unwrap();
        assert_abs_diff_eq!(plan.coupling.get(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_cost_gives_product() {
        let a = w(&[0.2, 0.3, 0.5]);
        let b = w(&[0.6, 0.1, 0.3]);
        let c = CostMatrix::dense(3, vec![0.7; 9]).unwrap();
        let plan = sinkhorn(&c, &a, &b, &SinkhornConfig::new(5.0)).unwrap();
        let product = independent_coupling(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(plan.coupling.get(i, j), product.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two_approaches_vertex_solution() {
        // The two vertices of the 2x2 LP are diag(0.5, 0.5) (cost 0) and the
        // anti-diagonal (cost 1); the entropic solution sits within
        // e^{-50}-ish of the first.
        let u = w(&[0.5, 0.5]);
        let c = CostMatrix::dense(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let cfg = SinkhornConfig { lambda: 50.0, tolerance: 1e-12, max_iterations: 1000 };
        let plan = sinkhorn(&c, &u, &u, &cfg).unwrap();
        let expected = [0.5, 0.0, 0.0, 0.5];
        for (x, y) in plan.coupling.to_dense().iter().zip(expected) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-6);
        }
        let (exact, cost) = exact_ot_small(&c, &u, &u).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(exact.to_dense(), expected.to_vec());
    }

    #[test]
    fn heavy_costs_do_not_underflow() {
        let a = w(&[0.5, 0.5]);
        let c = CostMatrix::dense(2, vec![1e4, 1e4 + 1.0, 1e4 + 1.0, 1e4]).unwrap();
        let plan = sinkhorn(&c, &a, &a, &SinkhornConfig::new(500.0)).unwrap();
        assert!(plan.coupling.max_marginal_error() < 1e-12);
        assert!(plan.coupling.trace() > 0.999);
    }

    #[test]
    fn output_is_valid_coupling_even_when_truncated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (x1, x2, a, b) = random_instance(&mut rng, 12);
            let c = CostMatrix::from_clouds(&x1, &x2, 2.0).unwrap();
            let cfg = SinkhornConfig { lambda: 200.0, tolerance: 1e-3, max_iterations: 2 };
            let plan = sinkhorn(&c, &a, &b, &cfg).unwrap();
            assert!(!plan.converged);
            assert!(plan.coupling.max_marginal_error() < 1e-12);
            assert!(plan.coupling.min_entry() >= 0.0);
        }
    }

    #[test]
    fn sparse_full_support_reproduces_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1usize, 2, 5, 17] {
            let (x1, x2, a, b) = random_instance(&mut rng, n);
            let dense = CostMatrix::from_clouds(&x1, &x2, 2.0).unwrap();
            let (rp, cols) = full_support(n);
            let sparse = CostMatrix::from_clouds_on_support(&x1, &x2, rp, cols, 2.0).unwrap();
            let cfg = SinkhornConfig::new(30.0);
            let d = sinkhorn(&dense, &a, &b, &cfg).unwrap();
            let s = sparse_sinkhorn(&sparse, &a, &b, &cfg).unwrap();
            assert!(!s.fallback);
            assert_eq!(d.iterations, s.iterations);
            for i in 0..n {
                for j in 0..n {
                    assert_abs_diff_eq!(d.coupling.get(i, j), s.coupling.get(i, j), epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn diagonal_support_forces_diagonal_coupling() {
        let a = w(&[0.1, 0.4, 0.5]);
        let entries = Csr { row_ptr: vec![0, 1, 2, 3], cols: vec![0, 1, 2], values: vec![0.0, 0.3, 1.0] };
        let c = CostMatrix::sparse(3, entries).unwrap();
        let plan = sparse_sinkhorn(&c, &a, &a, &SinkhornConfig::new(10.0)).unwrap();
        assert!(!plan.fallback);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { a[i] } else { 0.0 };
                assert_abs_diff_eq!(plan.coupling.get(i, j), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn empty_support_row_is_infeasible() {
        let a = w(&[0.5, 0.5]);
        let entries = Csr { row_ptr: vec![0, 2, 2], cols: vec![0, 1], values: vec![0.0, 1.0] };
        let c = CostMatrix::sparse(2, entries).unwrap();
        assert_eq!(sparse_sinkhorn(&c, &a, &a, &SinkhornConfig::new(1.0)), Err(Error::InfeasibleSupport));
    }

    #[test]
    fn unbalanced_support_still_gives_a_coupling() {
        // Row 0 (mass 0.9) may only use column 0 (mass 0.1).
        let a = w(&[0.9, 0.1]);
        let b = w(&[0.1, 0.9]);
        let entries = Csr { row_ptr: vec![0, 1, 3], cols: vec![0, 0, 1], values: vec![0.0, 1.0, 0.0] };
        let c = CostMatrix::sparse(2, entries).unwrap();
        let plan = sparse_sinkhorn(&c, &a, &b, &SinkhornConfig::new(1.0)).unwrap();
        assert!(plan.fallback || (!plan.converged && plan.rounding_mass > 0.5));
        assert!(plan.coupling.max_marginal_error() < 1e-12);
    }

    #[test]
    fn clustered_points_sparse_matches_dense() {
        // Two tight clusters; exact OT never crosses between them, so the
        // 2-NN symmetric support contains the optimal plan.
        let x1 = PointSet::new(vec![0.0, 0.0, 0.1, 0.0, 5.0, 5.0, 5.1, 5.0], 2).unwrap();
        let x2 = PointSet::new(vec![0.05, 0.02, 0.12, -0.01, 5.02, 5.01, 5.08, 4.97], 2).unwrap();
        let a = w(&[0.3, 0.2, 0.25, 0.25]);
        let b = w(&[0.25, 0.25, 0.2, 0.3]);
        let cfg = SinkhornConfig { lambda: 50.0, tolerance: 1e-12, max_iterations: 10_000 };
        let dense = sinkhorn(&CostMatrix::from_clouds(&x1, &x2, 2.0).unwrap(), &a, &b, &cfg).unwrap();
        let (rp, cols) = crate::neighbours::symmetric_knn_support(&x1, &x2, 2, 1).unwrap();
        let sparse_cost = CostMatrix::from_clouds_on_support(&x1, &x2, rp, cols, 2.0).unwrap();
        let sparse = sparse_sinkhorn(&sparse_cost, &a, &b, &cfg).unwrap();
        assert!(!sparse.fallback);
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(dense.coupling.get(i, j), sparse.coupling.get(i, j), epsilon = 1e-5);
            }
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn exact_matches_assignment_enumeration_for_uniform_marginals() {
        // With uniform marginals the LP optimum is attained at a permutation
        // matrix scaled by 1/n.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            for _ in 0..5 {
                let (x1, x2, _, _) = random_instance(&mut rng, n);
                let c = CostMatrix::from_clouds(&x1, &x2, 2.0).unwrap();
                let CostMatrix::Dense { values, .. } = &c else { unreachable!() };
                let u = WeightSimplex::uniform(n);
                let (plan, cost) = exact_ot_small(&c, &u, &u).unwrap();
                let best = permutations(n)
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(i, &j)| values[i * n + j]).sum::<f64>() / n as f64)
                    .fold(f64::INFINITY, f64::min);
                assert_abs_diff_eq!(cost, best, epsilon = 1e-12);
                assert!(plan.max_marginal_error() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_small_examples() {
        let c = CostMatrix::dense(2, vec![0.0, 2.5, 1.0, 0.0]).unwrap();
        let (plan, cost) = exact_ot_small(&c, &w(&[1.0, 0.0]), &w(&[0.0, 1.0])).unwrap();
        assert_eq!(plan.to_dense(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(cost, 2.5);

        let x = PointSet::new(vec![0.0, 1.0, 3.0], 1).unwrap();
        let a = w(&[0.2, 0.3, 0.5]);
        let (plan, cost) = exact_ot_small(&CostMatrix::from_clouds(&x, &x, 2.0).unwrap(), &a, &a).unwrap();
        assert_eq!(cost, 0.0);
        assert_abs_diff_eq!(plan.trace(), 1.0, epsilon = 1e-15);

        let big = CostMatrix::dense(17, vec![0.0; 289]).unwrap();
        let u = WeightSimplex::uniform(17);
        assert!(matches!(exact_ot_small(&big, &u, &u), Err(Error::ProblemTooLarge { .. })));
    }

    #[test]
    fn transport_cost_decreases_with_lambda_towards_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let (x1, x2, a, b) = random_instance(&mut rng, 8);
            let c = CostMatrix::from_clouds(&x1, &x2, 2.0).unwrap();
            let CostMatrix::Dense { values, .. } = &c else { unreachable!() };
            let (_, exact) = exact_ot_small(&c, &a, &b).unwrap();
            let mut previous = f64::INFINITY;
            for lambda in [1.0, 10.0, 100.0] {
                let cfg = SinkhornConfig { lambda, tolerance: 1e-10, max_iterations: 100_000 };
                let plan = sinkhorn(&c, &a, &b, &cfg).unwrap();
                let cost = plan.coupling.dot_dense(values);
                assert!(cost >= exact - 1e-9, "entropic cost below the LP optimum");
                assert!(cost <= previous + 1e-9, "cost increased with lambda");
                previous = cost;
            }
        }
    }

    #[test]
    fn maximal_trace_dominates_sinkhorn_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let (x1, x2, a, b) = random_instance(&mut rng, 10);
            let c = CostMatrix::from_clouds(&x1, &x2, 2.0).unwrap();
            let plan = sinkhorn(&c, &a, &b, &SinkhornConfig::new(50.0)).unwrap();
            assert!(maximal_coupling(&a, &b).unwrap().trace() >= plan.coupling.trace() - 1e-12);
        }
    }
}
