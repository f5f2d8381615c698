//! INI configuration.
//!
//! A config file has an optional `[run]` section (`seed`, `replicates`,
//! `threads`, `out`) and one section per experiment kind holding that
//! experiment's parameters. Every parameter has a default, so a missing
//! file or section runs the experiment at its default settings. Keys the
//! experiment does not know are rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cpf_core::filter::{CouplingScheme, FilterConfig, ResamplingMethod};
use cpf_core::transport::SinkhornConfig;
use ini::Ini;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ProportionPaired,
    DistanceTrace,
    SparseSpeedup,
    Mlpf,
    DeltaLoglik,
    McmcCompare,
    ParDelta,
    Simulate,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::ProportionPaired,
        Kind::DistanceTrace,
        Kind::SparseSpeedup,
        Kind::Mlpf,
        Kind::DeltaLoglik,
        Kind::McmcCompare,
        Kind::ParDelta,
        Kind::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::ProportionPaired => "proportion-paired",
            Kind::DistanceTrace => "distance-trace",
            Kind::SparseSpeedup => "sparse-speedup",
            Kind::Mlpf => "mlpf",
            Kind::DeltaLoglik => "delta-loglik",
            Kind::McmcCompare => "mcmc-compare",
            Kind::ParDelta => "par-delta",
            Kind::Simulate => "simulate",
        }
    }

    pub fn default_replicates(self) -> usize {
        match self {
            Kind::ProportionPaired | Kind::DistanceTrace => 200,
            Kind::SparseSpeedup => 100,
            Kind::Mlpf | Kind::DeltaLoglik | Kind::ParDelta => 25,
            Kind::McmcCompare | Kind::Simulate => 1,
        }
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind `{s}`")))
    }
}

impl Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Key/value parameters of one section.
#[derive(Debug, Clone, Default)]
pub struct Section {
    name: String,
    values: BTreeMap<String, String>,
}

impl Section {
    pub fn new(name: &str) -> Self {
        Section { name: name.to_owned(), values: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_owned(), value.to_string());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.trim()).filter(|s| !s.is_empty())
    }

    fn parse<T: FromStr>(&self, key: &str, s: &str) -> Result<T>
    where
        T::Err: Display,
    {
        s.trim().parse().map_err(|e| Error::Config(format!("[{}] {key} = `{s}`: {e}", self.name)))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key).map(|s| self.parse(key, s)).transpose()
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(s) => s.split(',').map(|item| self.parse(key, item)).collect(),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_owned()
    }

    pub fn ensure_known(&self, keys: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("[{}] unknown key `{k}`", self.name))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSettings {
    pub seed: u64,
    pub replicates: usize,
    pub threads: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub run: RunSettings,
    pub params: Section,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(kind: Kind, path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let ini = match path {
            Some(p) => Some(Ini::load_from_file(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
            None => None,
        };
        let section = |name: &str| {
            let mut s = Section::new(name);
            if let Some(props) = ini.as_ref().and_then(|i| i.section(Some(name))) {
                for (k, v) in props.iter() {
                    s.set(k, v);
                }
            }
            s
        };
        let run_section = section("run");
        run_section.ensure_known(&["seed", "replicates", "threads", "out"])?;
        let run = RunSettings {
            seed: overrides.seed.map_or_else(|| run_section.get("seed", 0), Ok)?,
            replicates: overrides.replicates.map_or_else(|| run_section.get("replicates", kind.default_replicates()), Ok)?,
            threads: overrides.threads.map_or_else(|| run_section.get("threads", 0), Ok)?,
            out: overrides.out.clone().unwrap_or_else(|| PathBuf::from(run_section.string("out", "out"))),
        };
        if run.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        Ok(ExperimentConfig { kind, run, params: section(kind.name()) })
    }
}

/// Coupling, Sinkhorn and filter settings shared by the filtering
/// experiments.
#[derive(Debug, Clone, Serialize)]
pub struct FilterSettings {
    pub particles: usize,
    pub ess_fraction: f64,
    pub resampling: String,
    pub schemes: Vec<String>,
    pub lambda: f64,
    /// `None` means ⌈log₂ N⌉.
    pub neighbours: Option<usize>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

pub const FILTER_KEYS: [&str; 8] =
    ["particles", "ess_fraction", "resampling", "schemes", "lambda", "neighbours", "tolerance", "max_iterations"];

impl FilterSettings {
    pub fn read(s: &Section, particles: usize, schemes: &[&str], lambda: f64) -> Result<Self> {
        let defaults = SinkhornConfig::new(lambda);
        let neighbours = match s.raw("neighbours") {
            None | Some("auto") => None,
            Some(v) => Some(s.parse("neighbours", v)?),
        };
        let out = FilterSettings {
            particles: s.get("particles", particles)?,
            ess_fraction: s.get("ess_fraction", 0.5)?,
            resampling: s.string("resampling", "systematic"),
            schemes: s.list("schemes", &schemes.iter().map(|x| x.to_string()).collect::<Vec<_>>())?,
            lambda: s.get("lambda", lambda)?,
            neighbours,
            tolerance: s.get("tolerance", defaults.tolerance)?,
            max_iterations: s.get("max_iterations", defaults.max_iterations)?,
        };
        out.filter_config()?;
        for name in &out.schemes {
            out.scheme(name)?;
        }
        Ok(out)
    }

    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig { lambda: self.lambda, tolerance: self.tolerance, max_iterations: self.max_iterations }
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let mut cfg = FilterConfig::new(self.particles);
        cfg.ess_fraction = self.ess_fraction;
        cfg.method = match self.resampling.as_str() {
            "systematic" => ResamplingMethod::Systematic,
            "multinomial" => ResamplingMethod::Multinomial,
            other => return Err(Error::Config(format!("unknown resampling method `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scheme(&self, name: &str) -> Result<CouplingScheme> {
        Ok(match name {
            "independent" => CouplingScheme::Independent,
            "maximal" => CouplingScheme::Maximal,
            "ot-dense" => CouplingScheme::OtDense(self.sinkhorn()),
            "ot-sparse" => CouplingScheme::OtSparse { sinkhorn: self.sinkhorn(), neighbours: self.neighbours },
            other => return Err(Error::Config(format!("unknown coupling scheme `{other}`"))),
        })
    }

    pub fn schemes(&self) -> Result<Vec<(String, CouplingScheme)>> {
        self.schemes.iter().map(|n| Ok((n.clone(), self.scheme(n)?))).collect()
    }
}
