//! Replicate orchestration and result persistence.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, RunSettings};
use crate::data::write_json;
use crate::table::ReplicateTable;
use crate::{experiments, Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub replicate: usize,
    pub error: String,
}

/// A per-replicate table. Tables holding wall-clock timings are not
/// reproducible byte for byte and say so in the manifest.
#[derive(Debug, Clone)]
pub struct Output {
    pub name: String,
    pub table: ReplicateTable,
    pub deterministic: bool,
}

/// What an experiment hands back for writing.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub params: Value,
    pub tables: Vec<Output>,
    /// Files the experiment wrote itself, with their determinism.
    pub files: Vec<(String, bool)>,
    pub failures: Vec<Failure>,
}

impl Report {
    pub fn table(&mut self, name: impl Into<String>, table: ReplicateTable, deterministic: bool) {
        self.tables.push(Output { name: name.into(), table, deterministic });
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub deterministic: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub version: &'static str,
    pub run: RunSettings,
    pub params: Value,
    pub outputs: Vec<OutputFile>,
    pub failures: Vec<Failure>,
    pub elapsed_seconds: f64,
    pub finished_unix_seconds: u64,
}

/// Run `f` for replicates `0..n` on a pool of `threads` workers (0 lets
/// the pool decide). Results come back in replicate order. Failed
/// replicates are logged and returned separately; it is an error only if
/// every replicate fails.
pub fn replicates<T, F>(run: &RunSettings, f: F) -> Result<(Vec<(usize, T)>, Vec<Failure>)>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(run.threads).build()?;
    let results: Vec<(usize, Result<T>)> =
        pool.install(|| (0..run.replicates).into_par_iter().map(|r| (r, f(r))).collect());
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(v) => ok.push((r, v)),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push(Failure { replicate: r, error: e.to_string() });
            }
        }
    }
    if ok.is_empty() {
        let first = failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(Error::Data(format!("all {} replicates failed; first error: {first}", failures.len())));
    }
    Ok((ok, failures))
}

/// Run an experiment and write its tables, their aggregates and
/// `manifest.json` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    let start = Instant::now();
    let out = &cfg.run.out;
    std::fs::create_dir_all(out).map_err(Error::io(out))?;
    let report = experiments::dispatch(cfg)?;
    let mut outputs: Vec<OutputFile> =
        report.files.iter().map(|(p, d)| OutputFile { path: p.clone(), deterministic: *d }).collect();
    for o in &report.tables {
        let name = format!("{}.csv", o.name);
        o.table.write(&out.join(&name))?;
        outputs.push(OutputFile { path: name, deterministic: o.deterministic });
        let name = format!("{}_aggregate.csv", o.name);
        o.table.aggregate()?.write(&out.join(&name))?;
        outputs.push(OutputFile { path: name, deterministic: o.deterministic });
    }
    let manifest = Manifest {
        kind: cfg.kind.name().to_owned(),
        version: env!("CARGO_PKG_VERSION"),
        run: cfg.run.clone(),
        params: report.params,
        outputs,
        failures: report.failures,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        finished_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Aggregate a per-replicate CSV written by any experiment.
pub fn aggregate_file(input: &Path, output: &Path) -> Result<()> {
    ReplicateTable::read(input)?.aggregate()?.write(output)
}
