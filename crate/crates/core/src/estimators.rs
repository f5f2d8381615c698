//! Estimators built on coupled filters, and MCMC efficiency metrics.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::filter::{
    bootstrap_filter, coupled_filter, coupled_filter_observed, AuxiliaryNoise, CouplingScheme, FilterConfig,
    NoiseSource, RngNoise, StateSpaceModel, StepSummary,
};
use crate::math::{exp, log, sqrt};
use crate::rng::{open_uniform, standard_normal};
use crate::{Error, Result};

/// Two-level multilevel estimates of `E[φ(X_t) | y_{0:t}]` at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpfResult {
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    /// `coarse + (fine − coarse)`, computed term by term.
    pub ml_estimate: Vec<f64>,
    /// `log Ẑ_fine − log Ẑ_coarse`.
    pub delta_log_lik: f64,
    pub trace: Vec<StepSummary>,
}

impl MlpfResult {
    pub fn difference(&self) -> Vec<f64> {
        self.fine.iter().zip(&self.coarse).map(|(f, c)| f - c).collect()
    }
}

/// Couple a coarse and a fine discretisation and record the weighted mean
/// of `phi` on each level after every step.
pub fn mlpf_two_level<M1, M2, S, F>(
    coarse: &M1,
    fine: &M2,
    phi: F,
    cfg: &FilterConfig,
    scheme: &CouplingScheme,
    noise: &mut S,
) -> Result<MlpfResult>
where
    M1: StateSpaceModel + ?Sized,
    M2: StateSpaceModel + ?Sized,
    S: NoiseSource + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let mut c = Vec::with_capacity(coarse.num_steps());
    let mut f = Vec::with_capacity(fine.num_steps());
    let run = coupled_filter_observed(coarse, fine, cfg, scheme, noise, |_, a, b| {
        c.push(a.weighted_mean(&phi));
        f.push(b.weighted_mean(&phi));
    })?;
    let ml_estimate = c.iter().zip(&f).map(|(c, f)| c + (f - c)).collect();
    Ok(MlpfResult { coarse: c, fine: f, ml_estimate, delta_log_lik: run.log_lik2 - run.log_lik1, trace: run.trace })
}

/// `log Ẑ(plus) − log Ẑ(minus)` from one coupled run.
pub fn delta_loglik<M1, M2, S>(
    minus: &M1,
    plus: &M2,
    cfg: &FilterConfig,
    scheme: &CouplingScheme,
    noise: &mut S,
) -> Result<f64>
where
    M1: StateSpaceModel + ?Sized,
    M2: StateSpaceModel + ?Sized,
    S: NoiseSource + ?Sized,
{
    let run = coupled_filter(minus, plus, cfg, scheme, noise)?;
    Ok(run.log_lik2 - run.log_lik1)
}

/// Source of elapsed time for per-step timings.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// A clock that never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcChain {
    pub samples: Vec<Vec<f64>>,
    /// The likelihood quantity the chain saw at each iteration: the
    /// proposed delta for noisy chains, the current log-likelihood
    /// estimate for pseudo-marginal chains.
    pub log_lik_estimates: Vec<f64>,
    pub accept_count: usize,
    pub collapse_count: usize,
    pub per_step_seconds: f64,
}

impl McmcChain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.accept_count as f64 / self.samples.len() as f64
        }
    }

    /// Coordinate `k` of every sample after dropping `burn_in` iterations.
    pub fn coordinate(&self, k: usize, burn_in: usize) -> Vec<f64> {
        self.samples.iter().skip(burn_in).map(|s| s[k]).collect()
    }
}

/// Gaussian random walk with per-coordinate scales.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalk {
    pub scales: Vec<f64>,
}

impl RandomWalk {
    fn propose<R: RngCore + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        theta.iter().zip(&self.scales).map(|(&t, &s)| t + s * standard_normal(rng)).collect()
    }
}

/// `min{1, exp(log_ratio)}`.
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        exp(log_ratio)
    }
}

fn accept<R: RngCore + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log(open_uniform(rng)) < log_ratio
}

/// Estimates `ℓ(θ') − ℓ(θ)`.
pub trait DeltaEstimator {
    fn delta(&mut self, theta: &[f64], proposal: &[f64], rng: &mut dyn RngCore) -> Result<f64>;
}

impl<F> DeltaEstimator for F
where
    F: FnMut(&[f64], &[f64], &mut dyn RngCore) -> Result<f64>,
{
    fn delta(&mut self, theta: &[f64], proposal: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        self(theta, proposal, rng)
    }
}

/// One coupled filter run at `(θ, θ')` per call.
#[derive(Debug, Clone)]
pub struct CoupledFilterDelta<F> {
    pub factory: F,
    pub cfg: FilterConfig,
    pub scheme: CouplingScheme,
}

impl<F, M> DeltaEstimator for CoupledFilterDelta<F>
where
    F: Fn(&[f64]) -> Result<M>,
    M: StateSpaceModel,
{
    fn delta(&mut self, theta: &[f64], proposal: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let m1 = (self.factory)(theta)?;
        let m2 = (self.factory)(proposal)?;
        delta_loglik(&m1, &m2, &self.cfg, &self.scheme, &mut RngNoise(rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub initial: Vec<f64>,
    pub proposal: RandomWalk,
    pub iterations: usize,
}

impl McmcConfig {
    fn validate(&self) -> Result<()> {
        if self.initial.is_empty() || self.initial.len() != self.proposal.scales.len() {
            return Err(Error::InvalidArgument("initial point and proposal scales must have equal positive length"));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be positive"));
        }
        Ok(())
    }
}

/// Metropolis chain that re-estimates the log-likelihood difference from
/// scratch at every iteration. A particle collapse rejects the move.
pub fn noisy_mcmc<P, D, R, C>(cfg: &McmcConfig, log_prior: P, estimator: &mut D, rng: &mut R, clock: &C) -> Result<McmcChain>
where
    P: Fn(&[f64]) -> f64,
    D: DeltaEstimator + ?Sized,
    R: RngCore,
    C: Clock + ?Sized,
{
    cfg.validate()?;
    let start = clock.seconds();
    let mut theta = cfg.initial.clone();
    let mut prior = log_prior(&theta);
    let mut chain = McmcChain {
        samples: Vec::with_capacity(cfg.iterations),
        log_lik_estimates: Vec::with_capacity(cfg.iterations),
        accept_count: 0,
        collapse_count: 0,
        per_step_seconds: 0.0,
    };
    for _ in 0..cfg.iterations {
        let proposal = cfg.proposal.propose(&theta, rng);
        let proposal_prior = log_prior(&proposal);
        let mut delta = f64::NAN;
        if proposal_prior > f64::NEG_INFINITY {
            match estimator.delta(&theta, &proposal, rng) {
                Ok(d) => {
                    delta = d;
                    if accept(proposal_prior - prior + d, rng) {
                        theta = proposal;
                        prior = proposal_prior;
                        chain.accept_count += 1;
                    }
                }
                Err(Error::ParticleCollapse { .. }) => chain.collapse_count += 1,
                Err(e) => return Err(e),
            }
        }
        chain.samples.push(theta.clone());
        chain.log_lik_estimates.push(delta);
    }
    chain.per_step_seconds = (clock.seconds() - start) / cfg.iterations as f64;
    Ok(chain)
}

/// `u' = ρu + √(1 − ρ²) ξ` with fresh standard Gaussians `ξ`.
pub fn autoregressive_refresh<R: RngCore + ?Sized>(u: &[f64], rho: f64, rng: &mut R, out: &mut [f64]) {
    let s = sqrt((1.0 - rho * rho).max(0.0));
    for (o, &x) in out.iter_mut().zip(u) {
        let xi = standard_normal(rng);
        *o = rho * x + s * xi;
    }
}

/// Correlated pseudo-marginal Metropolis–Hastings. The full auxiliary
/// noise of a bootstrap filter is refreshed autoregressively with
/// correlation `rho` and accepted jointly with `θ`.
pub fn correlated_pm_mcmc<P, F, M, R, C>(
    cfg: &McmcConfig,
    log_prior: P,
    factory: F,
    filter: &FilterConfig,
    rho: f64,
    rng: &mut R,
    clock: &C,
) -> Result<McmcChain>
where
    P: Fn(&[f64]) -> f64,
    F: Fn(&[f64]) -> Result<M>,
    M: StateSpaceModel,
    R: RngCore,
    C: Clock + ?Sized,
{
    cfg.validate()?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument("rho must lie in [0, 1]"));
    }
    let start = clock.seconds();
    let mut theta = cfg.initial.clone();
    let mut prior = log_prior(&theta);
    let model = factory(&theta)?;
    let mut aux = AuxiliaryNoise::zeros(&model, filter.particles);
    aux.values_mut().iter_mut().for_each(|z| *z = standard_normal(rng));
    let mut proposal_aux = aux.clone();
    let mut ll = bootstrap_filter(&model, filter, &mut aux)?.0;
    let mut chain = McmcChain {
        samples: Vec::with_capacity(cfg.iterations),
        log_lik_estimates: Vec::with_capacity(cfg.iterations),
        accept_count: 0,
        collapse_count: 0,
        per_step_seconds: 0.0,
    };
    for _ in 0..cfg.iterations {
        let proposal = cfg.proposal.propose(&theta, rng);
        autoregressive_refresh(aux.values(), rho, rng, proposal_aux.values_mut());
        let proposal_prior = log_prior(&proposal);
        if proposal_prior > f64::NEG_INFINITY {
            let m = factory(&proposal)?;
            if m.num_steps() != model.num_steps() || m.noise_dim() != model.noise_dim() {
                return Err(Error::IncompatibleModels("proposal changes the noise layout"));
            }
            match bootstrap_filter(&m, filter, &mut proposal_aux) {
                Ok((proposal_ll, _)) => {
                    if accept(proposal_prior - prior + proposal_ll - ll, rng) {
                        theta = proposal;
                        prior = proposal_prior;
                        ll = proposal_ll;
                        core::mem::swap(&mut aux, &mut proposal_aux);
                        chain.accept_count += 1;
                    }
                }
                Err(Error::ParticleCollapse { .. }) => chain.collapse_count += 1,
                Err(e) => return Err(e),
            }
        }
        chain.samples.push(theta.clone());
        chain.log_lik_estimates.push(ll);
    }
    chain.per_step_seconds = (clock.seconds() - start) / cfg.iterations as f64;
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IactEstimate {
    pub value: f64,
    /// Autocovariance pairs summed before the sequence turned nonpositive.
    pub pairs: usize,
    /// The estimate fell below 1, as happens for antithetic chains.
    pub below_one: bool,
}

/// Geyer's initial positive sequence estimate of the integrated
/// autocorrelation time, with `1/n` autocovariances.
pub fn iact_with_diagnostics(chain: &[f64]) -> Result<IactEstimate> {
    let n = chain.len();
    if n < 10 {
        return Err(Error::InvalidArgument("chain must have at least 10 samples"));
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = chain.iter().map(|x| x - mean).collect();
    let autocov = |k: usize| -> f64 { centred[..n - k].iter().zip(&centred[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 };
    let g0 = autocov(0);
    if !(g0 > 0.0) || !g0.is_finite() {
        return Err(Error::DegenerateChain);
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocov(2 * m) + autocov(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        pairs += 1;
        m += 1;
    }
    let value = -1.0 + 2.0 * sum / g0;
    Ok(IactEstimate { value, pairs, below_one: value < 1.0 })
}

pub fn iact(chain: &[f64]) -> Result<f64> {
    iact_with_diagnostics(chain).map(|e| e.value)
}

fn positive(x: f64, what: &'static str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidArgument(what))
    }
}

/// `IACT × seconds per step`.
pub fn inefficiency(iact: f64, per_step_seconds: f64) -> Result<f64> {
    Ok(positive(iact, "IACT must be positive")? * positive(per_step_seconds, "step time must be positive")?)
}

/// `variance × run time`.
pub fn variance_inefficiency(variance: f64, run_seconds: f64) -> Result<f64> {
    Ok(positive(variance, "variance must be positive")? * positive(run_seconds, "run time must be positive")?)
}

/// How many times less efficient `a` is than `b`.
pub fn inefficiency_ratio(a: f64, b: f64) -> Result<f64> {
    Ok(positive(a, "inefficiency must be positive")? / positive(b, "inefficiency must be positive")?)
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}
