use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cpf::table::ReplicateTable;
use cpf::{run_experiment, ExperimentConfig, Kind, Overrides};
use serde_json::Value;

const SMALL: &str = "
[run]
replicates = 3

[distance-trace]
particles = 48
length = 8

[proportion-paired]
particles = 48
length = 8
gammas = 0.01, 0.1

[delta-loglik]
particles = 24
length = 5
runs = 3

[mcmc-compare]
noisy_particles = 8
pm_particles = 16
length = 4
iterations = 40
burn_in = 5

[simulate]
model = ricker
length = 8
";

fn config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.ini");
    fs::write(&path, text).unwrap();
    path
}

fn run(kind: Kind, cfg: &Path, out: PathBuf, threads: usize) -> Value {
    let overrides = Overrides { out: Some(out.clone()), threads: Some(threads), ..Overrides::default() };
    run_experiment(&ExperimentConfig::load(kind, Some(cfg), &overrides).unwrap()).unwrap();
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn deterministic_files(manifest: &Value) -> Vec<String> {
    manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|o| o["deterministic"].as_bool().unwrap())
        .map(|o| o["path"].as_str().unwrap().to_owned())
        .collect()
}

#[test]
fn same_seed_gives_identical_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    for kind in [Kind::DistanceTrace, Kind::ProportionPaired, Kind::DeltaLoglik, Kind::McmcCompare, Kind::Simulate] {
        let a = run(kind, &cfg, dir.path().join(format!("{kind}-a")), 1);
        run(kind, &cfg, dir.path().join(format!("{kind}-b")), 2);
        let files = deterministic_files(&a);
        assert!(!files.is_empty(), "{kind}");
        for f in files {
            let x = fs::read(dir.path().join(format!("{kind}-a")).join(&f)).unwrap();
            let y = fs::read(dir.path().join(format!("{kind}-b")).join(&f)).unwrap();
            assert!(x == y, "{kind}: {f} differs");
        }
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(Kind::DistanceTrace, &cfg, a.clone(), 1);
    let overrides = Overrides { out: Some(b.clone()), seed: Some(1), threads: Some(1), ..Overrides::default() };
    run_experiment(&ExperimentConfig::load(Kind::DistanceTrace, Some(&cfg), &overrides).unwrap()).unwrap();
    let name = "distance_gamma_0.001.csv";
    assert_ne!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
}

#[test]
fn tables_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("pp");
    run(Kind::ProportionPaired, &cfg, out.clone(), 1);
    let text = fs::read_to_string(out.join("paired_gamma_0.1.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.starts_with("t,replicate,independent,maximal\n"));
    let t = ReplicateTable::read(&out.join("paired_gamma_0.1.csv")).unwrap();
    assert_eq!(t.rows.len(), 3 * 8);
    assert!(t.rows.iter().all(|r| r.values.iter().all(|v| (0.0..=1.0).contains(v))));
    // Paired proportion starts at one: both filters begin from the same
    // deterministic state and no resampling has happened yet.
    assert!(t.rows.iter().filter(|r| r.x == "0").all(|r| r.values == [1.0, 1.0]));
    let agg = fs::read_to_string(out.join("paired_gamma_0.1_aggregate.csv")).unwrap();
    assert!(agg.starts_with("t,independent_median,independent_p5,independent_p95,maximal_median,maximal_p5,maximal_p95\n"));
    assert_eq!(agg.lines().count(), 1 + 8);
}

#[test]
fn aggregate_is_a_function_of_the_replicate_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("dt");
    run(Kind::DistanceTrace, &cfg, out.clone(), 1);
    let again = dir.path().join("again.csv");
    cpf::aggregate_file(&out.join("distance_gamma_0.001.csv"), &again).unwrap();
    assert_eq!(fs::read(again).unwrap(), fs::read(out.join("distance_gamma_0.001_aggregate.csv")).unwrap());
}

#[test]
fn simulated_file_reproduces_internal_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let sim = dir.path().join("sim");
    run(Kind::Simulate, &cfg, sim.clone(), 1);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(sim.join("observations.json")).unwrap()).unwrap();
    assert_eq!(sidecar["model"], "ricker");
    assert_eq!(sidecar["length"], 8);

    let with_file = SMALL.replace(
        "[distance-trace]\n",
        &format!("[distance-trace]\nobservations = {}\n", sim.join("observations.csv").display()),
    );
    let file_cfg = config(&dir.path().join("sim"), &with_file);
    run(Kind::DistanceTrace, &file_cfg, dir.path().join("from-file"), 1);
    run(Kind::DistanceTrace, &cfg, dir.path().join("internal"), 1);
    let name = "distance_gamma_0.001.csv";
    assert_eq!(
        fs::read(dir.path().join("from-file").join(name)).unwrap(),
        fs::read(dir.path().join("internal").join(name)).unwrap()
    );
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cpf")).args(args).output().unwrap()
}

#[test]
fn cli_aggregates_nearest_rank() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let mut text = String::from("N,replicate,speedup,flat\n");
    for i in 1..=100 {
        text.push_str(&format!("500,{},{i},2\n", i - 1));
    }
    text.push_str("1000,0,7.5,2\n");
    fs::write(&input, text).unwrap();
    let output = dir.path().join("out.csv");
    let res = cli(&["aggregate", "--in", input.to_str().unwrap(), "--out", output.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        fs::read_to_string(output).unwrap(),
        "N,speedup_median,speedup_p5,speedup_p95,flat_median,flat_p5,flat_p95\n500,50,5,95,2,2,2\n1000,7.5,7.5,7.5,2,2,2\n"
    );
}

#[test]
fn cli_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "t,replicate,a\n").unwrap();
    let res = cli(&["aggregate", "--in", input.to_str().unwrap(), "--out", dir.path().join("o.csv").to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nothing to aggregate"));
}

#[test]
fn cli_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    for (text, message) in [
        ("[distance-trace]\nparticlez = 10\n", "unknown key `particlez`"),
        ("[distance-trace]\nschemes = greedy\n", "unknown coupling scheme"),
        ("[run]\nreplicates = 0\n", "replicates must be at least 1"),
        ("[distance-trace]\nparticles = many\n", "particles"),
    ] {
        let cfg = config(dir.path(), text);
        let res = cli(&["distance-trace", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(!res.status.success(), "{text}");
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(message), "{text}: {err}");
    }
}

#[test]
fn cli_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[run]\nreplicates = 5\nseed = 3\n[simulate]\nmodel = par\nlength = 4\n");
    let out = dir.path().join("sim");
    let res = cli(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "11", "--replicates", "1",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["run"]["seed"], 11);
    assert_eq!(m["run"]["replicates"], 1);
    assert_eq!(fs::read_to_string(out.join("observations.csv")).unwrap().lines().count(), 1 + 4);
    assert_eq!(fs::read_to_string(out.join("latent.csv")).unwrap().lines().next(), Some("x1,x2,x3,x4"));
}
