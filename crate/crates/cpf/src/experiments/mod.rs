//! One module per experiment family.

mod inefficiency;
mod mcmc;
mod ricker;
mod simulate;

use std::time::Instant;

use cpf_core::estimators::Clock;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Kind};
use crate::run::Report;
use crate::seeds::replicate_rng;
use crate::Result;

pub fn dispatch(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.kind {
        Kind::ProportionPaired => ricker::traces(cfg, ricker::Trace::Paired),
        Kind::DistanceTrace => ricker::traces(cfg, ricker::Trace::Distance),
        Kind::SparseSpeedup => ricker::sparse_speedup(cfg),
        Kind::Mlpf => inefficiency::mlpf(cfg),
        Kind::DeltaLoglik => inefficiency::delta_loglik(cfg),
        Kind::ParDelta => inefficiency::par_delta(cfg),
        Kind::McmcCompare => mcmc::compare(cfg),
        Kind::Simulate => simulate::simulate(cfg),
    }
}

/// Stream `stream` of replicate `r`. Different streams of one replicate
/// are independent; the same stream feeds every scheme so that schemes
/// are compared on common random numbers.
pub(crate) fn stream(cfg: &ExperimentConfig, r: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = replicate_rng(cfg.run.seed, r as u64);
    rng.set_stream(stream);
    rng
}

pub(crate) struct WallClock(Instant);

impl WallClock {
    pub(crate) fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// `γ` as written in file names: `1e-3` becomes `0.001`.
pub(crate) fn label(x: f64) -> String {
    format!("{x}")
}
