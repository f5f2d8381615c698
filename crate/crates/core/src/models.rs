//! Benchmark state-space models.
//!
//! Every model turns its uniforms into Gaussians coordinatewise with
//! [`normal_quantile`], so the same uniforms drive nearby parameter values
//! to nearby states.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::filter::StateSpaceModel;
use crate::math::{cos, exp, normal_log_pdf, normal_quantile, poisson_log_pmf, sin, sqrt, LN_2PI};
use crate::{Error, Result};

const POISSON_MEAN_FLOOR: f64 = 1e-300;

fn check_obs(len: usize, width: usize) -> Result<usize> {
    if width == 0 || len == 0 || len % width != 0 {
        return Err(Error::InvalidArgument("observation array must hold a positive whole number of rows"));
    }
    Ok(len / width)
}

/// Substeps per observation interval, when `dt` divides `delta`.
fn substeps(delta: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && delta > 0.0) {
        return Err(Error::InvalidArgument("time steps must be positive"));
    }
    let k = libm::round(delta / dt);
    if k < 1.0 || ((k * dt - delta) / delta).abs() > 1e-9 {
        return Err(Error::InvalidArgument("dt must divide the observation spacing"));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RickerParams {
    pub log_r: f64,
    pub sigma_eps: f64,
    pub phi: f64,
    pub x0: Vec<f64>,
}

impl RickerParams {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

/// `x' = r x exp(−x + ε)` coordinatewise, `y ~ Poisson(φ x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ricker {
    params: RickerParams,
    obs: Vec<f64>,
    steps: usize,
}

impl Ricker {
    /// `obs` holds `T + 1` rows of `d` counts, row-major.
    pub fn new(params: RickerParams, obs: Vec<f64>) -> Result<Self> {
        if !(params.sigma_eps >= 0.0 && params.phi > 0.0) {
            return Err(Error::InvalidArgument("Ricker needs sigma_eps >= 0 and phi > 0"));
        }
        if obs.iter().any(|&y| !(y >= 0.0) || libm::trunc(y) != y) {
            return Err(Error::InvalidArgument("Ricker observations must be nonnegative integers"));
        }
        let steps = check_obs(obs.len(), params.dim())?;
        Ok(Ricker { params, obs, steps })
    }

    pub fn params(&self) -> &RickerParams {
        &self.params
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        let d = self.params.dim();
        &self.obs[t * d..(t + 1) * d]
    }

    /// One coordinate of the map for a given Gaussian `eps`.
    pub fn step(&self, x: f64, eps: f64) -> f64 {
        x * exp(self.params.log_r - x + eps)
    }

    pub fn observation_log_density(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(&x, &y)| poisson_log_pmf(y, (self.params.phi * x).max(POISSON_MEAN_FLOOR))).sum()
    }
}

impl StateSpaceModel for Ricker {
    fn state_dim(&self) -> usize {
        self.params.dim()
    }
    fn noise_dim(&self) -> usize {
        self.params.dim()
    }
    fn num_steps(&self) -> usize {
        self.steps
    }
    fn sample_initial(&self, _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.params.x0);
    }
    fn transition(&self, _t: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        for ((o, &x), &u) in out.iter_mut().zip(x).zip(u) {
            *o = self.step(x, self.params.sigma_eps * normal_quantile(u));
        }
    }
    fn log_weight(&self, t: usize, x: &[f64]) -> f64 {
        self.observation_log_density(x, self.observation(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    pub alpha: f64,
    pub sigma: f64,
    pub sigma_eps: f64,
    pub delta: f64,
    pub dt: f64,
    pub x0: [f64; 2],
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams { alpha: 0.5, sigma: 1.0, sigma_eps: 0.5, delta: 0.1, dt: 0.001, x0: [0.2, 0.2] }
    }
}

/// `Γ(X) = [[sin R, −cos R], [cos R, sin R]]` with `R = ‖X‖₂`.
pub fn gamma_matrix(x: [f64; 2]) -> [[f64; 2]; 2] {
    let r = sqrt(x[0] * x[0] + x[1] * x[1]);
    let (s, c) = (sin(r), cos(r));
    [[s, -c], [c, s]]
}

/// Euler scheme for `dX = −αX dt + Γ(σX) dW`, observed through
/// `y ~ N(X₁, σ_ε²)` every `delta` time units.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffusion {
    params: DiffusionParams,
    substeps: usize,
    refine: usize,
    obs: Vec<f64>,
}

impl Diffusion {
    pub fn new(params: DiffusionParams, obs: Vec<f64>) -> Result<Self> {
        Self::with_refinement(params, obs, 1)
    }

    /// A model whose Brownian increments are each built from `refine`
    /// consecutive finer increments, `W = (z₁ + … + z_refine)/√refine`.
    /// The result reads the same noise as a model with step `dt / refine`,
    /// which is how the two levels of a multilevel pair share their
    /// Brownian path.
    pub fn with_refinement(params: DiffusionParams, obs: Vec<f64>, refine: usize) -> Result<Self> {
        if !(params.sigma > 0.0 && params.sigma_eps > 0.0) {
            return Err(Error::InvalidArgument("diffusion needs sigma > 0 and sigma_eps > 0"));
        }
        if refine == 0 {
            return Err(Error::InvalidArgument("refinement must be at least 1"));
        }
        check_obs(obs.len(), 1)?;
        let substeps = substeps(params.delta, params.dt)?;
        Ok(Diffusion { params, substeps, refine, obs })
    }

    /// A coarse level with step `dt` and a fine level with step `dt/2` on
    /// the same Brownian path.
    pub fn level_pair(params: DiffusionParams, obs: Vec<f64>) -> Result<(Self, Self)> {
        let coarse = Self::with_refinement(params, obs.clone(), 2)?;
        let fine = Self::new(DiffusionParams { dt: params.dt / 2.0, ..params }, obs)?;
        Ok((coarse, fine))
    }

    pub fn params(&self) -> &DiffusionParams {
        &self.params
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// One Euler step driven by the standard Gaussian pair `w`.
    pub fn euler_step(&self, x: [f64; 2], w: [f64; 2]) -> [f64; 2] {
        let p = &self.params;
        let g = gamma_matrix([p.sigma * x[0], p.sigma * x[1]]);
        let h = sqrt(p.dt);
        [
            x[0] - p.alpha * x[0] * p.dt + h * (g[0][0] * w[0] + g[0][1] * w[1]),
            x[1] - p.alpha * x[1] * p.dt + h * (g[1][0] * w[0] + g[1][1] * w[1]),
        ]
    }
}

impl StateSpaceModel for Diffusion {
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        2 * self.substeps * self.refine
    }
    fn num_steps(&self) -> usize {
        self.obs.len()
    }
    fn sample_initial(&self, _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.params.x0);
    }
    fn transition(&self, _t: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        let scale = 1.0 / sqrt(self.refine as f64);
        let mut s = [x[0], x[1]];
        for block in u.chunks_exact(2 * self.refine) {
            let mut w = [0.0; 2];
            for pair in block.chunks_exact(2) {
                w[0] += normal_quantile(pair[0]);
                w[1] += normal_quantile(pair[1]);
            }
            s = self.euler_step(s, [w[0] * scale, w[1] * scale]);
        }
        out.copy_from_slice(&s);
    }
    fn log_weight(&self, t: usize, x: &[f64]) -> f64 {
        normal_log_pdf(self.obs[t], x[0], self.params.sigma_eps)
    }
}

/// Stoichiometry with species rows in state order (DNA, P₂, RNA, P).
pub const PAR_STOICHIOMETRY: [[f64; 8]; 4] = [
    [-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, -2.0, 2.0, 0.0, -1.0],
];

/// Observation row applied to the state.
pub const PAR_OBSERVATION: [f64; 4] = [0.0, 1.0, 2.0, 0.0];

const CHOLESKY_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParParams {
    pub c: [f64; 8],
    pub k: f64,
    pub sigma_eps2: f64,
    pub dt: f64,
    pub x0: [f64; 4],
}

impl Default for ParParams {
    fn default() -> Self {
        ParParams {
            c: [0.1, 0.7, 0.35, 0.35, 0.2, 0.1, 0.9, 0.3],
            k: 10.0,
            sigma_eps2: 10.0,
            dt: 0.1,
            x0: [8.0, 8.0, 8.0, 5.0],
        }
    }
}

/// Hazards `h(x, c)`, each clamped at zero.
pub fn par_hazard(x: &[f64; 4], c: &[f64; 8], k: f64) -> [f64; 8] {
    let [dna, p2, rna, p] = *x;
    let h = [
        c[0] * dna * p2,
        c[1] * (k - dna),
        c[2] * dna,
        c[3] * rna,
        c[4] * p * (p - 1.0) / 2.0,
        c[5] * p2,
        c[6] * rna,
        c[7] * p,
    ];
    h.map(|v| v.max(0.0))
}

/// `β = S diag(h) Sᵀ`.
pub fn par_diffusion_matrix(h: &[f64; 8]) -> [[f64; 4]; 4] {
    let s = &PAR_STOICHIOMETRY;
    let mut b = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let v: f64 = (0..8).map(|r| s[i][r] * h[r] * s[j][r]).sum();
            b[i][j] = v;
            b[j][i] = v;
        }
    }
    b
}

/// Lower Cholesky factor. A pivot that is not positive is replaced by a
/// small jitter; the return flag says whether that happened.
pub fn cholesky_jittered(b: &[[f64; 4]; 4]) -> ([[f64; 4]; 4], bool) {
    let mut l = [[0.0; 4]; 4];
    let mut jittered = false;
    for j in 0..4 {
        let mut d = b[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d <= CHOLESKY_JITTER {
            d = d.max(0.0) + CHOLESKY_JITTER;
            jittered = true;
        }
        let djj = sqrt(d);
        l[j][j] = djj;
        for i in j + 1..4 {
            let mut s = b[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    (l, jittered)
}

/// Counters for the domain repairs made during PAR propagation.
#[derive(Debug, Default)]
pub struct ParDiagnostics {
    clamps: AtomicUsize,
    jitters: AtomicUsize,
}

impl ParDiagnostics {
    pub fn clamps(&self) -> usize {
        self.clamps.load(Ordering::Relaxed)
    }

    pub fn jitters(&self) -> usize {
        self.jitters.load(Ordering::Relaxed)
    }
}

/// Chemical Langevin approximation of prokaryotic auto-regulation.
///
/// Observations are one per unit time, `y = (0, 1, 2, 0)·x + N(0, σ_ε²)`;
/// a NaN entry marks a time without an observation.
#[derive(Debug)]
pub struct Par {
    params: ParParams,
    substeps: usize,
    obs: Vec<f64>,
    diagnostics: ParDiagnostics,
}

impl Par {
    pub fn new(params: ParParams, obs: Vec<f64>) -> Result<Self> {
        if params.c.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::InvalidArgument("PAR rates must be positive"));
        }
        if !(params.sigma_eps2 > 0.0 && params.k > 0.0) {
            return Err(Error::InvalidArgument("PAR needs sigma_eps2 > 0 and K > 0"));
        }
        check_obs(obs.len(), 1)?;
        let substeps = substeps(1.0, params.dt)?;
        Ok(Par { params, substeps, obs, diagnostics: ParDiagnostics::default() })
    }

    pub fn params(&self) -> &ParParams {
        &self.params
    }

    pub fn diagnostics(&self) -> &ParDiagnostics {
        &self.diagnostics
    }

    /// One Euler step driven by the standard Gaussian vector `xi`.
    pub fn euler_step(&self, x: [f64; 4], xi: [f64; 4]) -> [f64; 4] {
        let p = &self.params;
        let h = par_hazard(&x, &p.c, p.k);
        let (l, jittered) = cholesky_jittered(&par_diffusion_matrix(&h));
        if jittered {
            self.diagnostics.jitters.fetch_add(1, Ordering::Relaxed);
        }
        let root = sqrt(p.dt);
        let mut next = [0.0; 4];
        let mut clamped = false;
        for i in 0..4 {
            let drift: f64 = (0..8).map(|r| PAR_STOICHIOMETRY[i][r] * h[r]).sum();
            let noise: f64 = (0..=i).map(|k| l[i][k] * xi[k]).sum();
            let mut v = x[i] + drift * p.dt + root * noise;
            let hi = if i == 0 { p.k } else { f64::INFINITY };
            if !(v >= 0.0) || v > hi {
                v = if v > hi { hi } else { 0.0 };
                clamped = true;
            }
            next[i] = v;
        }
        if clamped {
            self.diagnostics.clamps.fetch_add(1, Ordering::Relaxed);
        }
        next
    }

    pub fn observe(x: &[f64]) -> f64 {
        PAR_OBSERVATION.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

impl StateSpaceModel for Par {
    fn state_dim(&self) -> usize {
        4
    }
    fn noise_dim(&self) -> usize {
        4 * self.substeps
    }
    fn num_steps(&self) -> usize {
        self.obs.len()
    }
    fn sample_initial(&self, _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.params.x0);
    }
    fn transition(&self, _t: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        let mut s = [x[0], x[1], x[2], x[3]];
        for b in u.chunks_exact(4) {
            s = self.euler_step(s, [b[0], b[1], b[2], b[3]].map(normal_quantile));
        }
        out.copy_from_slice(&s);
    }
    fn log_weight(&self, t: usize, x: &[f64]) -> f64 {
        let y = self.obs[t];
        if y.is_nan() {
            return 0.0;
        }
        normal_log_pdf(y, Self::observe(x), sqrt(self.params.sigma_eps2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianParams {
    pub a: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
}

/// `X_t = a X_{t−1} + σ_X ξ`, `Y_t = X_t + σ_Y η`, `X_0 ~ N(m₀, v₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    params: LinearGaussianParams,
    obs: Vec<f64>,
}

impl LinearGaussian {
    pub fn new(params: LinearGaussianParams, obs: Vec<f64>) -> Result<Self> {
        if !(params.sigma_x >= 0.0 && params.sigma_y > 0.0 && params.prior_var >= 0.0) {
            return Err(Error::InvalidArgument("linear-Gaussian needs sigma_x >= 0, sigma_y > 0, prior_var >= 0"));
        }
        check_obs(obs.len(), 1)?;
        Ok(LinearGaussian { params, obs })
    }

    pub fn params(&self) -> &LinearGaussianParams {
        &self.params
    }

    pub fn observations(&self) -> &[f64] {
        &self.obs
    }

    /// Exact log-likelihood by the Kalman recursion.
    pub fn kalman_loglik(&self) -> f64 {
        kalman_loglik(&self.params, &self.obs)
    }
}

pub fn kalman_loglik(p: &LinearGaussianParams, ys: &[f64]) -> f64 {
    let (mut m, mut v) = (p.prior_mean, p.prior_var);
    let ry = p.sigma_y * p.sigma_y;
    let mut ll = 0.0;
    for (t, &y) in ys.iter().enumerate() {
        if t > 0 {
            m *= p.a;
            v = p.a * p.a * v + p.sigma_x * p.sigma_x;
        }
        let s = v + ry;
        let e = y - m;
        ll -= 0.5 * (LN_2PI + crate::math::log(s) + e * e / s);
        let gain = v / s;
        m += gain * e;
        v *= 1.0 - gain;
    }
    ll
}

impl StateSpaceModel for LinearGaussian {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn init_noise_dim(&self) -> usize {
        1
    }
    fn num_steps(&self) -> usize {
        self.obs.len()
    }
    fn sample_initial(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.params.prior_mean + sqrt(self.params.prior_var) * normal_quantile(u[0]);
    }
    fn transition(&self, _t: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = self.params.a * x[0] + self.params.sigma_x * normal_quantile(u[0]);
    }
    fn log_weight(&self, t: usize, x: &[f64]) -> f64 {
        normal_log_pdf(self.obs[t], x[0], self.params.sigma_y)
    }
}

/// Run a model forward from its initial state on the given uniforms and
/// return the `(T + 1) × d` latent path. `u` holds `q₀ + T·q` values.
pub fn latent_path<M: StateSpaceModel + ?Sized>(model: &M, u: &[f64]) -> Vec<f64> {
    let (d, q0, q) = (model.state_dim(), model.init_noise_dim(), model.noise_dim());
    let steps = model.num_steps();
    let mut path = vec![0.0; steps * d];
    model.sample_initial(&u[..q0], &mut path[..d]);
    for t in 1..steps {
        let (done, rest) = path.split_at_mut(t * d);
        let off = q0 + (t - 1) * q;
        model.transition(t, &done[(t - 1) * d..], &u[off..off + q], &mut rest[..d]);
    }
    path
}

/// Models that can also generate their own observations.
pub trait ObservationSampler: StateSpaceModel {
    fn observation_dim(&self) -> usize;
    /// Uniforms consumed per observation.
    fn observation_noise_dim(&self) -> usize {
        self.observation_dim()
    }
    fn sample_observation(&self, x: &[f64], u: &[f64], out: &mut [f64]);
}

/// Smallest `k` with `P(Poisson(mean) ≤ k) ≥ u`.
pub fn poisson_quantile(mean: f64, u: f64) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    let mut k = 0.0;
    let mut log_pmf = -mean;
    let mut cdf = exp(log_pmf);
    let limit = mean + 40.0 * sqrt(mean) + 100.0;
    while cdf < u && k < limit {
        k += 1.0;
        log_pmf += crate::math::log(mean / k);
        cdf += exp(log_pmf);
    }
    k
}

impl ObservationSampler for Ricker {
    fn observation_dim(&self) -> usize {
        self.params.dim()
    }
    fn sample_observation(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        for ((o, &x), &u) in out.iter_mut().zip(x).zip(u) {
            *o = poisson_quantile(self.params.phi * x, u);
        }
    }
}

impl ObservationSampler for Diffusion {
    fn observation_dim(&self) -> usize {
        1
    }
    fn sample_observation(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = x[0] + self.params.sigma_eps * normal_quantile(u[0]);
    }
}

impl ObservationSampler for Par {
    fn observation_dim(&self) -> usize {
        1
    }
    fn sample_observation(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = Self::observe(x) + sqrt(self.params.sigma_eps2) * normal_quantile(u[0]);
    }
}

impl ObservationSampler for LinearGaussian {
    fn observation_dim(&self) -> usize {
        1
    }
    fn sample_observation(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = x[0] + self.params.sigma_y * normal_quantile(u[0]);
    }
}

/// Draw a latent path and one observation per step from the model's own
/// dynamics. The model's stored observations only fix the horizon.
/// Returns `(path, observations)`, both row-major.
pub fn simulate<M, R>(model: &M, rng: &mut R) -> (Vec<f64>, Vec<f64>)
where
    M: ObservationSampler + ?Sized,
    R: rand_core::RngCore + ?Sized,
{
    let steps = model.num_steps();
    let n_state = model.init_noise_dim() + steps.saturating_sub(1) * model.noise_dim();
    let u: Vec<f64> = (0..n_state).map(|_| crate::rng::open_uniform(rng)).collect();
    let path = latent_path(model, &u);
    let (d, p, q) = (model.state_dim(), model.observation_dim(), model.observation_noise_dim());
    let mut obs = vec![0.0; steps * p];
    let mut v = vec![0.0; q];
    for t in 0..steps {
        v.iter_mut().for_each(|x| *x = crate::rng::open_uniform(rng));
        model.sample_observation(&path[t * d..(t + 1) * d], &v, &mut obs[t * p..(t + 1) * p]);
    }
    (path, obs)
}
