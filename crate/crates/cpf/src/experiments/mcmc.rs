//! Noisy Metropolis with coupled-filter delta estimates against the
//! correlated pseudo-marginal chain, on `(log α, log σ)` of the diffusion.

use std::fs::File;
use std::io::BufWriter;

use cpf_core::estimators::{
    correlated_pm_mcmc, iact, inefficiency, inefficiency_ratio, noisy_mcmc, CoupledFilterDelta, McmcChain, McmcConfig,
    RandomWalk,
};
use cpf_core::math::normal_log_pdf;
use cpf_core::models::{Diffusion, DiffusionParams};
use serde_json::json;

use super::{stream, WallClock};
use crate::config::{ExperimentConfig, FilterSettings};
use crate::models::{diffusion_json, diffusion_observations, diffusion_params, DATA_KEYS, DIFFUSION_KEYS};
use crate::run::{replicates, Report};
use crate::table::{format_value, write_rows, ReplicateTable};
use crate::{Error, Result};

const PARAMETERS: [&str; 2] = ["log_alpha", "log_sigma"];

const KEYS: [&str; 15] = [
    "iterations",
    "burn_in",
    "noisy_particles",
    "noisy_scheme",
    "pm_particles",
    "rho",
    "proposal_sd",
    "prior_mean",
    "prior_sd",
    "ess_fraction",
    "resampling",
    "lambda",
    "neighbours",
    "tolerance",
    "max_iterations",
];

fn filter(cfg: &ExperimentConfig, particles_key: &str, default_particles: usize, scheme: &str) -> Result<FilterSettings> {
    let mut fs = FilterSettings::read(&cfg.params, default_particles, &[scheme], 500.0)?;
    fs.particles = cfg.params.get(particles_key, default_particles)?;
    fs.filter_config()?;
    Ok(fs)
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let keys: Vec<&str> = DIFFUSION_KEYS.iter().chain(&DATA_KEYS).chain(&KEYS).copied().collect();
    p.ensure_known(&keys)?;
    let star = diffusion_params(p)?;
    let obs = diffusion_observations(p, &star, 10, cfg.run.seed)?;
    let iterations: usize = p.get("iterations", 10_000)?;
    let burn_in: usize = p.get("burn_in", 1_000)?;
    if burn_in + 10 > iterations {
        return Err(Error::Config("need at least 10 iterations after burn-in".into()));
    }
    let noisy_scheme = p.string("noisy_scheme", "ot-sparse");
    let noisy_fs = filter(cfg, "noisy_particles", 20, &noisy_scheme)?;
    let pm_fs = filter(cfg, "pm_particles", 2000, "independent")?;
    let rho: f64 = p.get("rho", 0.9)?;
    let sd: f64 = p.get("proposal_sd", 0.5)?;
    let prior_mean: Vec<f64> = p.list("prior_mean", &[-1.0, 0.0])?;
    let prior_sd: Vec<f64> = p.list("prior_sd", &[0.75, 0.75])?;
    if prior_mean.len() != 2 || prior_sd.len() != 2 || prior_sd.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config("prior_mean and prior_sd need two values, sds positive".into()));
    }
    let log_prior = |t: &[f64]| normal_log_pdf(t[0], prior_mean[0], prior_sd[0]) + normal_log_pdf(t[1], prior_mean[1], prior_sd[1]);
    let factory = |t: &[f64]| Diffusion::new(DiffusionParams { alpha: t[0].exp(), sigma: t[1].exp(), ..star }, obs.values.clone());
    let mcfg = McmcConfig {
        initial: vec![star.alpha.ln(), star.sigma.ln()],
        proposal: RandomWalk { scales: vec![sd; 2] },
        iterations,
    };
    let scheme = noisy_fs.scheme(&noisy_scheme)?;
    let noisy_fc = noisy_fs.filter_config()?;
    let pm_fc = pm_fs.filter_config()?;

    let (done, failures) = replicates(&cfg.run, |r| -> Result<(McmcChain, McmcChain)> {
        let mut estimator = CoupledFilterDelta { factory, cfg: noisy_fc, scheme };
        let noisy = noisy_mcmc(&mcfg, log_prior, &mut estimator, &mut stream(cfg, r, 0), &WallClock::new())?;
        let pm = correlated_pm_mcmc(&mcfg, log_prior, factory, &pm_fc, rho, &mut stream(cfg, r, 1), &WallClock::new())?;
        Ok((noisy, pm))
    })?;

    let cols = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut iact_table = ReplicateTable::new(
        "parameter",
        cols(&["noisy_iact", "pm_iact", "noisy_acceptance", "pm_acceptance", "noisy_collapses", "pm_collapses"]),
    );
    let mut eff_table =
        ReplicateTable::new("parameter", cols(&["noisy_seconds_per_step", "pm_seconds_per_step", "ratio"]));
    for (r, (noisy, pm)) in &done {
        for (k, name) in PARAMETERS.iter().enumerate() {
            let a = iact(&noisy.coordinate(k, burn_in)).unwrap_or(f64::NAN);
            let b = iact(&pm.coordinate(k, burn_in)).unwrap_or(f64::NAN);
            iact_table.push(
                name,
                *r,
                vec![
                    a,
                    b,
                    noisy.acceptance_rate(),
                    pm.acceptance_rate(),
                    noisy.collapse_count as f64,
                    pm.collapse_count as f64,
                ],
            );
            let ratio = inefficiency(b, pm.per_step_seconds)
                .and_then(|pm_ineff| inefficiency(a, noisy.per_step_seconds).and_then(|n| inefficiency_ratio(pm_ineff, n)))
                .unwrap_or(f64::NAN);
            eff_table.push(name, *r, vec![noisy.per_step_seconds, pm.per_step_seconds, ratio]);
        }
    }

    let samples = cfg.run.out.join("samples.csv");
    let file = File::create(&samples).map_err(Error::io(&samples))?;
    let rows = done.iter().flat_map(|(r, (noisy, pm))| {
        [("noisy", noisy), ("pm", pm)].into_iter().flat_map(move |(chain, c)| {
            c.samples.iter().enumerate().skip(burn_in).map(move |(i, s)| {
                vec![r.to_string(), chain.to_owned(), i.to_string(), format_value(s[0]), format_value(s[1])]
            })
        })
    });
    write_rows(BufWriter::new(file), &["replicate", "chain", "iteration", "log_alpha", "log_sigma"], rows)
        .map_err(Error::csv(&samples))?;

    let mut report = Report {
        params: json!({
            "model": diffusion_json(&star),
            "observations": obs.rows(),
            "iterations": iterations,
            "burn_in": burn_in,
            "noisy": noisy_fs,
            "noisy_scheme": noisy_scheme,
            "pm": pm_fs,
            "rho": rho,
            "proposal_sd": sd,
            "prior_mean": prior_mean,
            "prior_sd": prior_sd,
        }),
        files: vec![("samples.csv".into(), true)],
        failures,
        ..Report::default()
    };
    report.table("iact", iact_table, true);
    report.table("inefficiency", eff_table, false);
    Ok(report)
}
