//! Bootstrap and coupled bootstrap particle filters.
//!
//! Both filters of a coupled pair read the same noise stream. Propagation
//! noise is a block of `q` uniforms per particle per step; resampling reads
//! one shared uniform (systematic) or one per slot (multinomial).

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{log, normal_cdf};
use crate::neighbours::{symmetric_knn_support, PointSet, DEFAULT_LEAF_SIZE};
use crate::resampling::{multinomial_resample_with, systematic_resample, AncestorPair};
use crate::rng::{mix64, open_uniform, unit_uniform};
use crate::simplex::{independent_coupling, maximal_coupling, CouplingMatrix, WeightSimplex};
use crate::transport::{sinkhorn, sparse_sinkhorn, CostMatrix, SinkhornConfig, TransportPlan};
use crate::{Error, Result};

/// A hidden Markov model written as a noise-driven map.
///
/// Observations live inside the model. Step 0 draws the initial state and
/// weights it against the first observation; step `t ≥ 1` moves a state
/// from `t − 1` to `t`.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;
    /// Uniforms consumed per particle by [`transition`](Self::transition).
    fn noise_dim(&self) -> usize;
    /// Uniforms consumed per particle by [`sample_initial`](Self::sample_initial).
    fn init_noise_dim(&self) -> usize {
        0
    }
    /// Number of observations, `T + 1`.
    fn num_steps(&self) -> usize;
    fn sample_initial(&self, u: &[f64], out: &mut [f64]);
    fn transition(&self, t: usize, x: &[f64], u: &[f64], out: &mut [f64]);
    /// `log g_t(x, y_t)`.
    fn log_weight(&self, t: usize, x: &[f64]) -> f64;
}

impl<M: StateSpaceModel + ?Sized> StateSpaceModel for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn init_noise_dim(&self) -> usize {
        (**self).init_noise_dim()
    }
    fn num_steps(&self) -> usize {
        (**self).num_steps()
    }
    fn sample_initial(&self, u: &[f64], out: &mut [f64]) {
        (**self).sample_initial(u, out)
    }
    fn transition(&self, t: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        (**self).transition(t, x, u, out)
    }
    fn log_weight(&self, t: usize, x: &[f64]) -> f64 {
        (**self).log_weight(t, x)
    }
}

/// Where the filters get their randomness.
pub trait NoiseSource {
    /// Fill `out` (particle-major, `q` values per particle) with uniforms
    /// in (0, 1) for step `t`.
    fn propagation(&mut self, t: usize, out: &mut [f64]);
    /// Fill `out` with uniforms in [0, 1) for the resampling event that
    /// precedes step `t`.
    fn resampling(&mut self, t: usize, out: &mut [f64]);
}

/// Noise read straight off a random number generator, in call order.
#[derive(Debug, Clone)]
pub struct RngNoise<R>(pub R);

impl<R: rand_core::RngCore> NoiseSource for RngNoise<R> {
    fn propagation(&mut self, _t: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|u| *u = open_uniform(&mut self.0));
    }

    fn resampling(&mut self, _t: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|u| *u = unit_uniform(&mut self.0));
    }
}

impl<S: NoiseSource + ?Sized> NoiseSource for &mut S {
    fn propagation(&mut self, t: usize, out: &mut [f64]) {
        (**self).propagation(t, out)
    }
    fn resampling(&mut self, t: usize, out: &mut [f64]) {
        (**self).resampling(t, out)
    }
}

/// Every uniform a filter run can read, stored as standard Gaussians.
///
/// Layout per step `t`: the propagation block (`N · q₀` at step 0, `N · q`
/// afterwards), then for `t ≥ 1` a resampling slot of `N` values placed
/// before the propagation block. The slot is always present, so the array
/// size does not depend on how often the filter resamples. Uniforms are
/// `Φ(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryNoise {
    values: Vec<f64>,
    particles: usize,
    init_block: usize,
    step_block: usize,
}

const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

impl AuxiliaryNoise {
    pub fn zeros<M: StateSpaceModel + ?Sized>(model: &M, particles: usize) -> Self {
        let init_block = particles * model.init_noise_dim();
        let step_block = particles + particles * model.noise_dim();
        let len = init_block + model.num_steps().saturating_sub(1) * step_block;
        AuxiliaryNoise { values: vec![0.0; len], particles, init_block, step_block }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn step_start(&self, t: usize) -> usize {
        self.init_block + (t - 1) * self.step_block
    }

    fn fill(src: &[f64], out: &mut [f64]) {
        for (u, &z) in out.iter_mut().zip(src) {
            *u = normal_cdf(z).clamp(f64::MIN_POSITIVE, ONE_BELOW);
        }
    }
}

impl NoiseSource for AuxiliaryNoise {
    fn propagation(&mut self, t: usize, out: &mut [f64]) {
        let start = if t == 0 { 0 } else { self.step_start(t) + self.particles };
        Self::fill(&self.values[start..start + out.len()], out);
    }

    fn resampling(&mut self, t: usize, out: &mut [f64]) {
        let start = self.step_start(t);
        let len = out.len().min(self.particles);
        Self::fill(&self.values[start..start + len], &mut out[..len]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingMethod {
    #[default]
    Systematic,
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when the ESS drops below this fraction of `particles`.
    pub ess_fraction: f64,
    pub method: ResamplingMethod,
    /// Resample before every step regardless of the ESS.
    pub always_resample: bool,
}

impl FilterConfig {
    pub fn new(particles: usize) -> Self {
        FilterConfig { particles, ess_fraction: 0.5, method: ResamplingMethod::Systematic, always_resample: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidArgument("at least two particles are required"));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(Error::InvalidArgument("ess_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    fn should_resample(&self, ess: f64) -> bool {
        self.always_resample || ess < self.ess_fraction * self.particles as f64
    }

    fn resampling_draws(&self) -> usize {
        match self.method {
            ResamplingMethod::Systematic => 1,
            ResamplingMethod::Multinomial => self.particles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingScheme {
    Independent,
    Maximal,
    OtDense(SinkhornConfig),
    /// Sinkhorn on the symmetric `R`-nearest-neighbour support. `None`
    /// picks `R = ⌈log₂ N⌉`.
    OtSparse { sinkhorn: SinkhornConfig, neighbours: Option<usize> },
}

impl CouplingScheme {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingScheme::Independent => "independent",
            CouplingScheme::Maximal => "maximal",
            CouplingScheme::OtDense(_) => "ot-dense",
            CouplingScheme::OtSparse { .. } => "ot-sparse",
        }
    }
}

/// `⌈log₂ n⌉`, at least 1 and at most `n`.
pub fn default_neighbours(n: usize) -> usize {
    let r = usize::BITS - n.saturating_sub(1).leading_zeros();
    (r as usize).clamp(1, n.max(1))
}

/// `n` weighted particles in `dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    states: Vec<f64>,
    dim: usize,
    weights: WeightSimplex,
    log_z: f64,
    lineage: Vec<u128>,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &WeightSimplex {
        &self.weights
    }

    /// Running estimate of the log normalising constant.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Ancestry digest per particle.
    pub fn lineage(&self) -> &[u128] {
        &self.lineage
    }

    /// `Σ wᵢ φ(xᵢ)`.
    pub fn weighted_mean<F: FnMut(&[f64]) -> f64>(&self, mut phi: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * phi(self.point(i))).sum()
    }

    pub fn to_point_set(&self) -> Result<PointSet> {
        PointSet::new(self.states.clone(), self.dim)
    }
}

fn lineage_root(i: usize) -> u128 {
    extend_lineage(0, i)
}

fn extend_lineage(h: u128, ancestor: usize) -> u128 {
    let a = mix64(ancestor as u64 ^ 0x5851_f42d_4c95_7f2d);
    let lo = mix64(h as u64 ^ a);
    let hi = mix64((h >> 64) as u64 ^ lo.rotate_left(29) ^ 0x1405_7b7e_f767_814f);
    ((hi as u128) << 64) | lo as u128
}

/// One filter's working state between steps.
struct Filter<'m, M: ?Sized> {
    model: &'m M,
    cloud: ParticleCloud,
    scratch: Vec<f64>,
    log_inc: Vec<f64>,
}

impl<'m, M: StateSpaceModel + ?Sized> Filter<'m, M> {
    fn start(model: &'m M, n: usize, u: &[f64]) -> Self {
        let d = model.state_dim();
        let q0 = model.init_noise_dim();
        let mut states = vec![0.0; n * d];
        for i in 0..n {
            model.sample_initial(&u[i * q0..(i + 1) * q0], &mut states[i * d..(i + 1) * d]);
        }
        let cloud = ParticleCloud {
            states,
            dim: d,
            weights: WeightSimplex::uniform(n),
            log_z: 0.0,
            lineage: (0..n).map(lineage_root).collect(),
        };
        Filter { model, cloud, scratch: vec![0.0; n * d], log_inc: vec![0.0; n] }
    }

    fn propagate(&mut self, t: usize, ancestors: Option<&[usize]>, u: &[f64]) {
        let d = self.cloud.dim;
        let q = self.model.noise_dim();
        for i in 0..self.cloud.len() {
            let a = ancestors.map_or(i, |a| a[i]);
            let x = &self.cloud.states[a * d..(a + 1) * d];
            self.model.transition(t, x, &u[i * q..(i + 1) * q], &mut self.scratch[i * d..(i + 1) * d]);
        }
        core::mem::swap(&mut self.cloud.states, &mut self.scratch);
        if let Some(a) = ancestors {
            let old = core::mem::take(&mut self.cloud.lineage);
            self.cloud.lineage = a.iter().map(|&k| extend_lineage(old[k], k)).collect();
            self.cloud.weights = WeightSimplex::uniform(self.cloud.len());
        }
    }

    /// Multiply in `g_t` and add `log Σ wᵢ gᵢ` to the running estimate.
    fn reweight(&mut self, t: usize) -> Result<()> {
        let n = self.cloud.len();
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            let w = self.cloud.weights[i];
            let v = if w > 0.0 { log(w) + self.model.log_weight(t, self.cloud.point(i)) } else { f64::NEG_INFINITY };
            if v.is_nan() {
                return Err(Error::ParticleCollapse { step: t });
            }
            self.log_inc[i] = v;
            max = max.max(v);
        }
        if !max.is_finite() {
            return Err(Error::ParticleCollapse { step: t });
        }
        let mut total = 0.0;
        for v in self.log_inc.iter_mut() {
            *v = crate::math::exp(*v - max);
            total += *v;
        }
        self.cloud.log_z += max + log(total);
        let w: Vec<f64> = self.log_inc.iter().map(|v| v / total).collect();
        self.cloud.weights = WeightSimplex::from_normalized(w);
        Ok(())
    }
}

fn check_model<M: StateSpaceModel + ?Sized>(model: &M) -> Result<()> {
    if model.num_steps() == 0 {
        return Err(Error::InvalidArgument("the model has no observations"));
    }
    if model.state_dim() == 0 {
        return Err(Error::InvalidArgument("state dimension must be positive"));
    }
    Ok(())
}

/// Run a bootstrap particle filter. Returns `log Ẑ_T` and the weighted
/// terminal cloud.
pub fn bootstrap_filter<M, S>(model: &M, cfg: &FilterConfig, noise: &mut S) -> Result<(f64, ParticleCloud)>
where
    M: StateSpaceModel + ?Sized,
    S: NoiseSource + ?Sized,
{
    cfg.validate()?;
    check_model(model)?;
    let n = cfg.particles;
    let mut u = vec![0.0; n * model.init_noise_dim()];
    noise.propagation(0, &mut u);
    let mut f = Filter::start(model, n, &u);
    f.reweight(0)?;
    u.resize(n * model.noise_dim(), 0.0);
    let mut r = vec![0.0; cfg.resampling_draws()];
    for t in 1..model.num_steps() {
        let ancestors = if cfg.should_resample(f.cloud.weights.ess()) {
            noise.resampling(t, &mut r);
            let c = independent_coupling(&f.cloud.weights, &f.cloud.weights)?;
            Some(draw_pairs(&c, cfg.method, &r).a1)
        } else {
            None
        };
        noise.propagation(t, &mut u);
        f.propagate(t, ancestors.as_deref(), &u);
        f.reweight(t)?;
    }
    Ok((f.cloud.log_z, f.cloud))
}

fn draw_pairs(c: &CouplingMatrix, method: ResamplingMethod, r: &[f64]) -> AncestorPair {
    match method {
        ResamplingMethod::Systematic => systematic_resample(c, r[0]),
        ResamplingMethod::Multinomial => multinomial_resample_with(c, r),
    }
}

/// Per-step record of a coupled run, taken after reweighting at step `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    pub t: usize,
    /// `C_t`: particles whose full ancestry agrees across the two filters.
    pub paired: usize,
    /// `E_t`: mean squared distance between index-matched particles.
    pub mean_sq_distance: f64,
    pub ess1: f64,
    pub ess2: f64,
    /// Whether a joint resampling preceded this step.
    pub resampled: bool,
    /// The sparse transport failed and the maximal coupling was used.
    pub fallback: bool,
    pub log_z1: f64,
    pub log_z2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub log_lik1: f64,
    pub log_lik2: f64,
    pub trace: Vec<StepSummary>,
    pub cloud1: ParticleCloud,
    pub cloud2: ParticleCloud,
}

/// Transport coupling between two clouds under squared Euclidean cost.
/// `neighbours = None` runs the dense solver.
pub fn ot_coupling_for_clouds(
    cloud1: &ParticleCloud,
    cloud2: &ParticleCloud,
    neighbours: Option<usize>,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    let x1 = cloud1.to_point_set()?;
    let x2 = cloud2.to_point_set()?;
    match neighbours {
        None => sinkhorn(&CostMatrix::from_clouds(&x1, &x2, 2.0)?, cloud1.weights(), cloud2.weights(), cfg),
        Some(r) => {
            let (row_ptr, cols) = symmetric_knn_support(&x1, &x2, r, DEFAULT_LEAF_SIZE)?;
            let cost = CostMatrix::from_clouds_on_support(&x1, &x2, row_ptr, cols, 2.0)?;
            sparse_sinkhorn(&cost, cloud1.weights(), cloud2.weights(), cfg)
        }
    }
}

/// The coupling a scheme prescribes, and whether the sparse solver fell back.
pub fn coupling_for_scheme(
    scheme: &CouplingScheme,
    cloud1: &ParticleCloud,
    cloud2: &ParticleCloud,
) -> Result<(CouplingMatrix, bool)> {
    let (w1, w2) = (cloud1.weights(), cloud2.weights());
    Ok(match scheme {
        CouplingScheme::Independent => (independent_coupling(w1, w2)?, false),
        CouplingScheme::Maximal => (maximal_coupling(w1, w2)?, false),
        CouplingScheme::OtDense(cfg) => (ot_coupling_for_clouds(cloud1, cloud2, None, cfg)?.coupling, false),
        CouplingScheme::OtSparse { sinkhorn, neighbours } => {
            let r = neighbours.unwrap_or_else(|| default_neighbours(cloud1.len())).min(cloud1.len());
            let plan = ot_coupling_for_clouds(cloud1, cloud2, Some(r), sinkhorn)?;
            (plan.coupling, plan.fallback)
        }
    })
}

fn summarize(t: usize, f1: &ParticleCloud, f2: &ParticleCloud, resampled: bool, fallback: bool) -> StepSummary {
    let n = f1.len();
    let paired = f1.lineage.iter().zip(&f2.lineage).filter(|(a, b)| a == b).count();
    let sq: f64 = f1.states.iter().zip(&f2.states).map(|(a, b)| (a - b) * (a - b)).sum();
    StepSummary {
        t,
        paired,
        mean_sq_distance: sq / n as f64,
        ess1: f1.weights.ess(),
        ess2: f2.weights.ess(),
        resampled,
        fallback,
        log_z1: f1.log_z,
        log_z2: f2.log_z,
    }
}

/// Run two bootstrap filters on a shared noise stream, resampling both
/// through `scheme` whenever either ESS drops below the threshold.
pub fn coupled_filter<M1, M2, S>(
    model1: &M1,
    model2: &M2,
    cfg: &FilterConfig,
    scheme: &CouplingScheme,
    noise: &mut S,
) -> Result<CoupledRun>
where
    M1: StateSpaceModel + ?Sized,
    M2: StateSpaceModel + ?Sized,
    S: NoiseSource + ?Sized,
{
    coupled_filter_observed(model1, model2, cfg, scheme, noise, |_, _, _| {})
}

/// [`coupled_filter`] with a callback invoked after reweighting at every
/// step with `(t, cloud1, cloud2)`.
pub fn coupled_filter_observed<M1, M2, S, F>(
    model1: &M1,
    model2: &M2,
    cfg: &FilterConfig,
    scheme: &CouplingScheme,
    noise: &mut S,
    mut observe: F,
) -> Result<CoupledRun>
where
    M1: StateSpaceModel + ?Sized,
    M2: StateSpaceModel + ?Sized,
    S: NoiseSource + ?Sized,
    F: FnMut(usize, &ParticleCloud, &ParticleCloud),
{
    cfg.validate()?;
    check_model(model1)?;
    check_model(model2)?;
    if model1.state_dim() != model2.state_dim() {
        return Err(Error::IncompatibleModels("state dimensions differ"));
    }
    if model1.noise_dim() != model2.noise_dim() || model1.init_noise_dim() != model2.init_noise_dim() {
        return Err(Error::IncompatibleModels("noise dimensions differ"));
    }
    if model1.num_steps() != model2.num_steps() {
        return Err(Error::IncompatibleModels("observation counts differ"));
    }
    let n = cfg.particles;
    let mut u = vec![0.0; n * model1.init_noise_dim()];
    noise.propagation(0, &mut u);
    let mut f1 = Filter::start(model1, n, &u);
    let mut f2 = Filter::start(model2, n, &u);
    f1.reweight(0)?;
    f2.reweight(0)?;
    observe(0, &f1.cloud, &f2.cloud);
    let mut trace = Vec::with_capacity(model1.num_steps());
    trace.push(summarize(0, &f1.cloud, &f2.cloud, false, false));
    u.resize(n * model1.noise_dim(), 0.0);
    let mut r = vec![0.0; cfg.resampling_draws()];
    for t in 1..model1.num_steps() {
        let resample = cfg.should_resample(f1.cloud.weights.ess()) || cfg.should_resample(f2.cloud.weights.ess());
        let mut fallback = false;
        let pairs = if resample {
            noise.resampling(t, &mut r);
            let (c, fb) = coupling_for_scheme(scheme, &f1.cloud, &f2.cloud)?;
            fallback = fb;
            Some(draw_pairs(&c, cfg.method, &r))
        } else {
            None
        };
        noise.propagation(t, &mut u);
        f1.propagate(t, pairs.as_ref().map(|p| p.a1.as_slice()), &u);
        f2.propagate(t, pairs.as_ref().map(|p| p.a2.as_slice()), &u);
        f1.reweight(t)?;
        f2.reweight(t)?;
        observe(t, &f1.cloud, &f2.cloud);
        trace.push(summarize(t, &f1.cloud, &f2.cloud, resample, fallback));
    }
    Ok(CoupledRun { log_lik1: f1.cloud.log_z, log_lik2: f2.cloud.log_z, trace, cloud1: f1.cloud, cloud2: f2.cloud })
}
