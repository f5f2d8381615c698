//! Model parameters read from config sections, and the observation
//! sequences the experiments condition on.

use std::path::Path;

use cpf_core::models::{
    simulate, Diffusion, DiffusionParams, LinearGaussian, LinearGaussianParams, ObservationSampler, Par, ParParams,
    Ricker, RickerParams,
};
use serde_json::{json, Value};

use crate::config::Section;
use crate::data::Observations;
use crate::seeds::observation_rng;
use crate::{Error, Result};

pub const RICKER_KEYS: [&str; 5] = ["dim", "log_r", "sigma_eps", "phi", "x0"];
pub const DIFFUSION_KEYS: [&str; 6] = ["alpha", "sigma", "sigma_eps", "delta", "dt", "x0"];
pub const PAR_KEYS: [&str; 5] = ["c", "k", "sigma_eps2", "dt", "x0"];
pub const LINEAR_GAUSSIAN_KEYS: [&str; 5] = ["a", "sigma_x", "sigma_y", "prior_mean", "prior_var"];
/// Keys controlling the data: an optional CSV path and the number of rows.
pub const DATA_KEYS: [&str; 2] = ["observations", "length"];

fn array<const K: usize>(s: &Section, key: &str, default: [f64; K]) -> Result<[f64; K]> {
    let v = s.list(key, &default)?;
    v.try_into().map_err(|v: Vec<f64>| Error::Config(format!("{key} needs {K} values, got {}", v.len())))
}

pub fn ricker_params(s: &Section) -> Result<RickerParams> {
    let dim: usize = s.get("dim", 5)?;
    if dim == 0 {
        return Err(Error::Config("dim must be positive".into()));
    }
    Ok(RickerParams {
        log_r: s.get("log_r", 2.0)?,
        sigma_eps: s.get("sigma_eps", 0.3)?,
        phi: s.get("phi", 5.0)?,
        x0: vec![s.get("x0", 5.0)?; dim],
    })
}

pub fn ricker_json(p: &RickerParams) -> Value {
    json!({ "dim": p.dim(), "log_r": p.log_r, "sigma_eps": p.sigma_eps, "phi": p.phi, "x0": p.x0 })
}

/// Every parameter except the initial state multiplied by `s`.
pub fn ricker_scaled(p: &RickerParams, s: f64) -> RickerParams {
    RickerParams { log_r: p.log_r * s, sigma_eps: p.sigma_eps * s, phi: p.phi * s, x0: p.x0.clone() }
}

pub fn diffusion_params(s: &Section) -> Result<DiffusionParams> {
    let d = DiffusionParams::default();
    Ok(DiffusionParams {
        alpha: s.get("alpha", d.alpha)?,
        sigma: s.get("sigma", d.sigma)?,
        sigma_eps: s.get("sigma_eps", d.sigma_eps)?,
        delta: s.get("delta", d.delta)?,
        dt: s.get("dt", d.dt)?,
        x0: array(s, "x0", d.x0)?,
    })
}

pub fn diffusion_json(p: &DiffusionParams) -> Value {
    json!({ "alpha": p.alpha, "sigma": p.sigma, "sigma_eps": p.sigma_eps, "delta": p.delta, "dt": p.dt, "x0": p.x0 })
}

pub fn par_params(s: &Section) -> Result<ParParams> {
    let d = ParParams::default();
    Ok(ParParams {
        c: array(s, "c", d.c)?,
        k: s.get("k", d.k)?,
        sigma_eps2: s.get("sigma_eps2", d.sigma_eps2)?,
        dt: s.get("dt", d.dt)?,
        x0: array(s, "x0", d.x0)?,
    })
}

pub fn par_json(p: &ParParams) -> Value {
    json!({ "c": p.c, "k": p.k, "sigma_eps2": p.sigma_eps2, "dt": p.dt, "x0": p.x0 })
}

pub fn linear_gaussian_params(s: &Section) -> Result<LinearGaussianParams> {
    Ok(LinearGaussianParams {
        a: s.get("a", 0.9)?,
        sigma_x: s.get("sigma_x", 1.0)?,
        sigma_y: s.get("sigma_y", 1.0)?,
        prior_mean: s.get("prior_mean", 0.0)?,
        prior_var: s.get("prior_var", 1.0)?,
    })
}

pub fn linear_gaussian_json(p: &LinearGaussianParams) -> Value {
    json!({ "a": p.a, "sigma_x": p.sigma_x, "sigma_y": p.sigma_y, "prior_mean": p.prior_mean, "prior_var": p.prior_var })
}

/// The observations named by the `observations` key, or a sequence of
/// `length` rows simulated from `build(placeholder)` on the observation
/// stream of `seed`. An explicit `length` truncates a file.
pub fn observations<M, B>(s: &Section, default_length: usize, width: usize, seed: u64, build: B) -> Result<Observations>
where
    M: ObservationSampler,
    B: Fn(Vec<f64>) -> cpf_core::Result<M>,
{
    let length: Option<usize> = s.opt("length")?;
    if length == Some(0) {
        return Err(Error::Config("length must be positive".into()));
    }
    match s.opt::<String>("observations")? {
        Some(path) => {
            let mut obs = Observations::read(Path::new(&path))?;
            if obs.width != width {
                return Err(Error::Data(format!("{path}: expected {width} columns, found {}", obs.width)));
            }
            if let Some(n) = length {
                obs.truncate(n)?;
            }
            Ok(obs)
        }
        None => {
            let rows = length.unwrap_or(default_length);
            let template = build(vec![0.0; rows * width])?;
            let (_, values) = simulate(&template, &mut observation_rng(seed));
            Ok(Observations { values, width })
        }
    }
}

pub fn ricker_observations(s: &Section, p: &RickerParams, seed: u64) -> Result<Observations> {
    observations(s, 51, p.dim(), seed, |o| Ricker::new(p.clone(), o))
}

pub fn diffusion_observations(s: &Section, p: &DiffusionParams, default_length: usize, seed: u64) -> Result<Observations> {
    observations(s, default_length, 1, seed, |o| Diffusion::new(*p, o))
}

pub fn par_observations(s: &Section, p: &ParParams, seed: u64) -> Result<Observations> {
    observations(s, 100, 1, seed, |o| Par::new(*p, o))
}

pub fn linear_gaussian_observations(s: &Section, p: &LinearGaussianParams, seed: u64) -> Result<Observations> {
    observations(s, 100, 1, seed, |o| LinearGaussian::new(*p, o))
}
