//! Synthetic data. Uses the same observation stream as the experiments,
//! so running an experiment on the written file reproduces the run that
//! simulated its data internally.

use cpf_core::models::{simulate as draw, Diffusion, LinearGaussian, ObservationSampler, Par, Ricker};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::data::{write_json, Observations};
use crate::models::{
    diffusion_json, diffusion_params, linear_gaussian_json, linear_gaussian_params, par_json, par_params, ricker_json,
    ricker_params, DIFFUSION_KEYS, LINEAR_GAUSSIAN_KEYS, PAR_KEYS, RICKER_KEYS,
};
use crate::run::Report;
use crate::seeds::observation_rng;
use crate::{Error, Result};

fn write<M: ObservationSampler>(cfg: &ExperimentConfig, model: &M, name: &str, params: Value) -> Result<Report> {
    let (path, obs) = draw(model, &mut observation_rng(cfg.run.seed));
    let out = &cfg.run.out;
    Observations { values: obs, width: model.observation_dim() }.write(&out.join("observations.csv"))?;
    Observations { values: path, width: model.state_dim() }.write_prefixed(&out.join("latent.csv"), "x")?;
    let sidecar = json!({
        "model": name,
        "params": params,
        "seed": cfg.run.seed,
        "length": model.num_steps(),
    });
    write_json(&out.join("observations.json"), &sidecar)?;
    Ok(Report {
        params: sidecar,
        files: ["observations.csv", "latent.csv", "observations.json"].iter().map(|f| (f.to_string(), true)).collect(),
        ..Report::default()
    })
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.params;
    let model = p.string("model", "ricker");
    let keys: &[&str] = match model.as_str() {
        "ricker" => &RICKER_KEYS,
        "diffusion" => &DIFFUSION_KEYS,
        "par" => &PAR_KEYS,
        "linear-gaussian" => &LINEAR_GAUSSIAN_KEYS,
        other => return Err(Error::Config(format!("unknown model `{other}`"))),
    };
    let mut known = vec!["model", "length"];
    known.extend(keys);
    p.ensure_known(&known)?;
    let length: usize = p.get("length", if model == "ricker" { 51 } else { 101 })?;
    if length == 0 {
        return Err(Error::Config("length must be positive".into()));
    }
    match model.as_str() {
        "ricker" => {
            let q = ricker_params(p)?;
            let m = Ricker::new(q.clone(), vec![0.0; length * q.dim()])?;
            write(cfg, &m, &model, ricker_json(&q))
        }
        "diffusion" => {
            let q = diffusion_params(p)?;
            write(cfg, &Diffusion::new(q, vec![0.0; length])?, &model, diffusion_json(&q))
        }
        "par" => {
            let q = par_params(p)?;
            write(cfg, &Par::new(q, vec![0.0; length])?, &model, par_json(&q))
        }
        _ => {
            let q = linear_gaussian_params(p)?;
            write(cfg, &LinearGaussian::new(q, vec![0.0; length])?, &model, linear_gaussian_json(&q))
        }
    }
}
