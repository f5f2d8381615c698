//! Ricker experiments: paired-particle and distance traces between two
//! filters at `(1 − γ)θ★` and `(1 + γ)θ★`, and the dense against sparse
//! Sinkhorn timing on the clouds such a pair produces.

use std::time::Instant;

use cpf_core::filter::{
    coupled_filter, coupled_filter_observed, default_neighbours, ot_coupling_for_clouds, CouplingScheme, FilterConfig,
    ParticleCloud, RngNoise,
};
use cpf_core::models::{Ricker, RickerParams};
use cpf_core::transport::SinkhornConfig;
use serde_json::json;

use super::{label, stream};
use crate::config::{ExperimentConfig, FilterSettings, FILTER_KEYS};
use crate::data::Observations;
use crate::models::{ricker_json, ricker_observations, ricker_params, ricker_scaled, DATA_KEYS, RICKER_KEYS};
use crate::run::{replicates, Report};
use crate::table::ReplicateTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trace {
    /// `C_t / N`.
    Paired,
    /// `E_t`.
    Distance,
}

struct Setup {
    star: RickerParams,
    obs: Observations,
}

fn setup(cfg: &ExperimentConfig, extra: &[&str]) -> Result<Setup> {
    let p = &cfg.params;
    let keys: Vec<&str> = RICKER_KEYS.iter().chain(&DATA_KEYS).chain(extra).copied().collect();
    p.ensure_known(&keys)?;
    let star = ricker_params(p)?;
    let obs = ricker_observations(p, &star, cfg.run.seed)?;
    Ok(Setup { star, obs })
}

fn pair(s: &Setup, gamma: f64) -> Result<(Ricker, Ricker)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok((
        Ricker::new(ricker_scaled(&s.star, 1.0 - gamma), s.obs.values.clone())?,
        Ricker::new(ricker_scaled(&s.star, 1.0 + gamma), s.obs.values.clone())?,
    ))
}

struct SchemeTrace {
    values: Vec<f64>,
    resamplings: usize,
    fallbacks: usize,
}

pub fn traces(cfg: &ExperimentConfig, which: Trace) -> Result<Report> {
    let (prefix, default_schemes, default_gammas): (&str, &[&str], &[f64]) = match which {
        Trace::Paired => ("paired", &["independent", "maximal"], &[1e-3, 1e-2, 1e-1]),
        Trace::Distance => ("distance", &["independent", "maximal", "ot-sparse"], &[1e-3]),
    };
    let mut extra = FILTER_KEYS.to_vec();
    extra.push("gammas");
    let s = setup(cfg, &extra)?;
    let fs = FilterSettings::read(&cfg.params, 5000, default_schemes, 50.0)?;
    let gammas: Vec<f64> = cfg.params.list("gammas", default_gammas)?;
    let schemes = fs.schemes()?;
    let fc = fs.filter_config()?;
    let models = gammas.iter().map(|&g| pair(&s, g)).collect::<Result<Vec<_>>>()?;

    let (done, failures) = replicates(&cfg.run, |r| {
        models
            .iter()
            .map(|(m1, m2)| {
                schemes
                    .iter()
                    .map(|(_, scheme)| {
                        let run = coupled_filter(m1, m2, &fc, scheme, &mut RngNoise(stream(cfg, r, 0)))?;
                        let n = fc.particles as f64;
                        Ok(SchemeTrace {
                            values: run
                                .trace
                                .iter()
                                .map(|t| match which {
                                    Trace::Paired => t.paired as f64 / n,
                                    Trace::Distance => t.mean_sq_distance,
                                })
                                .collect(),
                            resamplings: run.trace.iter().filter(|t| t.resampled).count(),
                            fallbacks: run.trace.iter().filter(|t| t.fallback).count(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let names: Vec<String> = schemes.iter().map(|(n, _)| n.clone()).collect();
    let mut report = Report {
        params: json!({ "model": ricker_json(&s.star), "observations": s.obs.rows(), "gammas": gammas, "filter": fs }),
        failures,
        ..Report::default()
    };
    let mut events_cols = Vec::new();
    for n in &names {
        events_cols.push(format!("{n}_resamplings"));
        events_cols.push(format!("{n}_fallbacks"));
    }
    let mut events = ReplicateTable::new("gamma", events_cols);
    for (g, &gamma) in gammas.iter().enumerate() {
        let mut table = ReplicateTable::new("t", names.clone());
        for (r, per_gamma) in &done {
            let traces = &per_gamma[g];
            for t in 0..s.obs.rows() {
                table.push(t, *r, traces.iter().map(|tr| tr.values[t]).collect());
            }
            events.push(label(gamma), *r, traces.iter().flat_map(|tr| [tr.resamplings as f64, tr.fallbacks as f64]).collect());
        }
        report.table(format!("{prefix}_gamma_{}", label(gamma)), table, true);
    }
    report.table(format!("{prefix}_events"), events, true);
    Ok(report)
}

/// The two clouds at the first step where either ESS falls below the
/// resampling threshold, or the final clouds if that never happens.
fn clouds_at_first_resampling(
    m1: &Ricker,
    m2: &Ricker,
    fc: &FilterConfig,
    noise: &mut RngNoise<rand_chacha::ChaCha8Rng>,
) -> Result<(ParticleCloud, ParticleCloud)> {
    let threshold = fc.ess_fraction * fc.particles as f64;
    let mut found = None;
    let run = coupled_filter_observed(m1, m2, fc, &CouplingScheme::Maximal, noise, |_, c1, c2| {
        if found.is_none() && (c1.weights().ess() < threshold || c2.weights().ess() < threshold) {
            found = Some((c1.clone(), c2.clone()));
        }
    })?;
    Ok(found.unwrap_or((run.cloud1, run.cloud2)))
}

pub fn sparse_speedup(cfg: &ExperimentConfig) -> Result<Report> {
    let extra = ["sizes", "gamma", "lambda", "neighbours", "tolerance", "max_iterations"];
    let s = setup(cfg, &extra)?;
    let p = &cfg.params;
    let sizes: Vec<usize> = p.list("sizes", &[500, 1000, 2000, 4000])?;
    if sizes.iter().any(|&n| n < 2) {
        return Err(Error::Config("sizes must be at least 2".into()));
    }
    let gamma: f64 = p.get("gamma", 1e-2)?;
    let neighbours: Option<usize> = match p.string("neighbours", "auto").as_str() {
        "auto" => None,
        v => Some(v.parse().map_err(|e| Error::Config(format!("neighbours = `{v}`: {e}")))?),
    };
    let defaults = SinkhornConfig::new(p.get("lambda", 50.0)?);
    let sinkhorn = SinkhornConfig {
        tolerance: p.get("tolerance", defaults.tolerance)?,
        max_iterations: p.get("max_iterations", defaults.max_iterations)?,
        ..defaults
    };
    let (m1, m2) = pair(&s, gamma)?;

    let (done, failures) = replicates(&cfg.run, |r| {
        let mut noise = RngNoise(stream(cfg, r, 0));
        sizes
            .iter()
            .map(|&n| {
                let (c1, c2) = clouds_at_first_resampling(&m1, &m2, &FilterConfig::new(n), &mut noise)?;
                let k = neighbours.unwrap_or_else(|| default_neighbours(n)).min(n);
                let clock = Instant::now();
                let dense = ot_coupling_for_clouds(&c1, &c2, None, &sinkhorn)?;
                let dense_seconds = clock.elapsed().as_secs_f64();
                let clock = Instant::now();
                let sparse = ot_coupling_for_clouds(&c1, &c2, Some(k), &sinkhorn)?;
                let sparse_seconds = clock.elapsed().as_secs_f64();
                Ok(vec![
                    dense_seconds / sparse_seconds,
                    dense_seconds,
                    sparse_seconds,
                    dense.iterations as f64,
                    sparse.iterations as f64,
                    f64::from(u8::from(sparse.converged)),
                    f64::from(u8::from(sparse.fallback)),
                ])
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let columns = ["speedup", "dense_seconds", "sparse_seconds", "dense_iterations", "sparse_iterations", "sparse_converged", "sparse_fallback"];
    let mut table = ReplicateTable::new("N", columns.iter().map(|c| c.to_string()).collect());
    for (r, rows) in done {
        for (&n, values) in sizes.iter().zip(rows) {
            table.push(n, r, values);
        }
    }
    let mut report = Report {
        params: json!({
            "model": ricker_json(&s.star),
            "observations": s.obs.rows(),
            "gamma": gamma,
            "sizes": sizes,
            "neighbours": neighbours,
            "lambda": sinkhorn.lambda,
            "tolerance": sinkhorn.tolerance,
            "max_iterations": sinkhorn.max_iterations,
        }),
        failures,
        ..Report::default()
    };
    report.table("speedup", table, false);
    Ok(report)
}
