//! Variance-times-time comparisons of coupling schemes.
//!
//! A replicate is a batch of `runs` independent coupled runs per scheme,
//! all schemes reading the same noise. Each batch gives a variance and a
//! total wall time per x-axis point; the inefficiency of a scheme is their
//! product and its ratio is `reference / scheme`, the reference being the
//! first scheme listed.

use std::time::Instant;

use cpf_core::estimators::{delta_loglik as coupled_delta, inefficiency_ratio, mlpf_two_level, sample_variance, variance_inefficiency};
use cpf_core::filter::{CouplingScheme, FilterConfig, RngNoise, StateSpaceModel};
use cpf_core::models::{Diffusion, DiffusionParams, Par, ParParams};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{label, stream};
use crate::config::{ExperimentConfig, FilterSettings, FILTER_KEYS};
use crate::models::{
    diffusion_json, diffusion_observations, diffusion_params, par_json, par_observations, par_params, DATA_KEYS,
    DIFFUSION_KEYS, PAR_KEYS,
};
use crate::run::{replicates, Report};
use crate::table::ReplicateTable;
use crate::{Error, Result};

/// One run of one scheme: values indexed `[quantity][x]` and the seconds
/// spent on each x.
type RunOutput = (Vec<Vec<f64>>, Vec<f64>);

struct Design<'a> {
    x_name: &'a str,
    xs: Vec<String>,
    quantities: &'a [&'a str],
    runs: usize,
}

fn known_keys(model: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    FILTER_KEYS.iter().chain(&DATA_KEYS).chain(&["runs"]).chain(model).chain(extra).copied().collect()
}

fn runs(cfg: &ExperimentConfig) -> Result<usize> {
    let runs: usize = cfg.params.get("runs", 50)?;
    if runs < 2 {
        return Err(Error::Config("runs must be at least 2 to estimate a variance".into()));
    }
    Ok(runs)
}

fn or_nan(x: cpf_core::Result<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

fn compare<F>(cfg: &ExperimentConfig, design: Design<'_>, schemes: &[(String, CouplingScheme)], params: Value, one: F) -> Result<Report>
where
    F: Fn(&CouplingScheme, &mut ChaCha8Rng) -> Result<RunOutput> + Sync,
{
    let (nx, nq) = (design.xs.len(), design.quantities.len());
    // Per replicate, per scheme: (variance[q][x], seconds[x]).
    let (done, failures) = replicates(&cfg.run, |r| {
        schemes
            .iter()
            .map(|(_, scheme)| {
                let mut samples = vec![vec![Vec::with_capacity(design.runs); nx]; nq];
                let mut seconds = vec![0.0; nx];
                for j in 0..design.runs {
                    let (values, secs) = one(scheme, &mut stream(cfg, r, j as u64))?;
                    for (q, row) in values.into_iter().enumerate() {
                        for (x, v) in row.into_iter().enumerate() {
                            samples[q][x].push(v);
                        }
                    }
                    seconds.iter_mut().zip(secs).for_each(|(a, b)| *a += b);
                }
                let variance: Vec<Vec<f64>> =
                    samples.iter().map(|per_x| per_x.iter().map(|s| sample_variance(s)).collect()).collect();
                Ok((variance, seconds))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut var_cols = Vec::new();
    let mut eff_cols = Vec::new();
    for (s, (name, _)) in schemes.iter().enumerate() {
        var_cols.extend(design.quantities.iter().map(|q| format!("{name}_{q}")));
        eff_cols.push(format!("{name}_seconds"));
        if s > 0 {
            eff_cols.extend(design.quantities.iter().map(|q| format!("{name}_{q}_ratio")));
        }
    }
    let mut variance = ReplicateTable::new(design.x_name, var_cols);
    let mut efficiency = ReplicateTable::new(design.x_name, eff_cols);
    for (r, per_scheme) in &done {
        let (ref_var, ref_sec) = &per_scheme[0];
        for (x, xl) in design.xs.iter().enumerate() {
            let mut v = Vec::new();
            let mut e = Vec::new();
            for (s, (var, sec)) in per_scheme.iter().enumerate() {
                v.extend((0..nq).map(|q| var[q][x]));
                e.push(sec[x]);
                if s > 0 {
                    e.extend((0..nq).map(|q| {
                        let reference = variance_inefficiency(ref_var[q][x], ref_sec[x]);
                        let this = variance_inefficiency(var[q][x], sec[x]);
                        or_nan(reference.and_then(|a| this.and_then(|b| inefficiency_ratio(a, b))))
                    }));
                }
            }
            variance.push(xl, *r, v);
            efficiency.push(xl, *r, e);
        }
    }
    let mut report = Report { params, failures, ..Report::default() };
    report.table("variance", variance, true);
    report.table("inefficiency", efficiency, false);
    Ok(report)
}

fn filter_settings(cfg: &ExperimentConfig, particles: usize, lambda: f64) -> Result<(FilterSettings, FilterConfig, Vec<(String, CouplingScheme)>)> {
    let fs = FilterSettings::read(&cfg.params, particles, &["maximal", "ot-sparse"], lambda)?;
    let fc = fs.filter_config()?;
    let schemes = fs.schemes()?;
    if schemes.is_empty() {
        return Err(Error::Config("at least one scheme is required".into()));
    }
    Ok((fs, fc, schemes))
}

/// Two-level filter on the diffusion: fine-minus-coarse estimates of
/// `E[x₁ + x₂ | y_{0:k}]` and of the log-likelihood up to every `k`.
pub fn mlpf(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.params.ensure_known(&known_keys(&DIFFUSION_KEYS, &[]))?;
    let p = diffusion_params(&cfg.params)?;
    let obs = diffusion_observations(&cfg.params, &p, 101, cfg.run.seed)?;
    let (fs, fc, schemes) = filter_settings(cfg, 256, 500.0)?;
    let (coarse, fine) = Diffusion::level_pair(p, obs.values.clone())?;
    let steps = obs.rows();
    let params = json!({ "model": diffusion_json(&p), "observations": steps, "filter": fs, "runs": runs(cfg)? });
    let design = Design { x_name: "k", xs: (0..steps).map(|k| k.to_string()).collect(), quantities: &["phi", "dll"], runs: runs(cfg)? };
    compare(cfg, design, &schemes, params, |scheme, rng| {
        let clock = Instant::now();
        let res = mlpf_two_level(&coarse, &fine, |x| x[0] + x[1], &fc, scheme, &mut RngNoise(rng))?;
        let secs = clock.elapsed().as_secs_f64();
        let dll = res.trace.iter().map(|t| t.log_z2 - t.log_z1).collect();
        Ok((vec![res.difference(), dll], vec![secs; steps]))
    })
}

/// Delta log-likelihood `ℓ(plus(γ)) − ℓ(minus(γ))` for every γ.
fn delta_family<M, B>(cfg: &ExperimentConfig, gammas: &[f64], fc: &FilterConfig, schemes: &[(String, CouplingScheme)], params: Value, build: B) -> Result<Report>
where
    M: StateSpaceModel + Sync,
    B: Fn(f64) -> Result<M>,
{
    if gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
        return Err(Error::Config("gammas must lie in [0, 1)".into()));
    }
    let pairs = gammas.iter().map(|&g| Ok((build(1.0 - g)?, build(1.0 + g)?))).collect::<Result<Vec<_>>>()?;
    let design = Design { x_name: "gamma", xs: gammas.iter().map(|&g| label(g)).collect(), quantities: &["dll"], runs: runs(cfg)? };
    compare(cfg, design, schemes, params, |scheme, rng| {
        let mut values = Vec::with_capacity(pairs.len());
        let mut secs = Vec::with_capacity(pairs.len());
        for (minus, plus) in &pairs {
            let clock = Instant::now();
            values.push(coupled_delta(minus, plus, fc, scheme, &mut RngNoise(rng.clone()))?);
            secs.push(clock.elapsed().as_secs_f64());
        }
        Ok((vec![values], secs))
    })
}

/// Diffusion with `σ` and `σ_ε` scaled by `1 ± γ`.
pub fn delta_loglik(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.params.ensure_known(&known_keys(&DIFFUSION_KEYS, &["gammas"]))?;
    let p = diffusion_params(&cfg.params)?;
    let obs = diffusion_observations(&cfg.params, &p, 101, cfg.run.seed)?;
    let (fs, fc, schemes) = filter_settings(cfg, 256, 500.0)?;
    let gammas: Vec<f64> = cfg.params.list("gammas", &[1e-2, 5e-2])?;
    let params = json!({ "model": diffusion_json(&p), "observations": obs.rows(), "gammas": gammas, "filter": fs, "runs": runs(cfg)? });
    delta_family(cfg, &gammas, &fc, &schemes, params, |s| {
        Ok(Diffusion::new(DiffusionParams { sigma: p.sigma * s, sigma_eps: p.sigma_eps * s, ..p }, obs.values.clone())?)
    })
}

/// Auto-regulation network with `c₁` and `c₂` scaled by `1 ± γ`.
pub fn par_delta(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.params.ensure_known(&known_keys(&PAR_KEYS, &["gammas"]))?;
    let p = par_params(&cfg.params)?;
    let obs = par_observations(&cfg.params, &p, cfg.run.seed)?;
    let (fs, fc, schemes) = filter_settings(cfg, 256, 50.0)?;
    let gammas: Vec<f64> = cfg.params.list("gammas", &[1e-2, 5e-2])?;
    let params = json!({ "model": par_json(&p), "observations": obs.rows(), "gammas": gammas, "filter": fs, "runs": runs(cfg)? });
    delta_family(cfg, &gammas, &fc, &schemes, params, |s| {
        let mut c = p.c;
        c[0] *= s;
        c[1] *= s;
        Ok(Par::new(ParParams { c, ..p }, obs.values.clone())?)
    })
}
