use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpf::{aggregate_file, run_experiment, ExperimentConfig, Kind, Overrides};

#[derive(Parser)]
#[command(name = "cpf", version, about = "Coupled particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Paired-particle proportion C_t/N on the Ricker model
    ProportionPaired(RunArgs),
    /// Mean squared distance E_t between the two Ricker filters
    DistanceTrace(RunArgs),
    /// Dense over sparse Sinkhorn wall time against N
    SparseSpeedup(RunArgs),
    /// Two-level particle filter on the diffusion
    Mlpf(RunArgs),
    /// Delta log-likelihood on the diffusion
    DeltaLoglik(RunArgs),
    /// Noisy MCMC against correlated pseudo-marginal MCMC
    McmcCompare(RunArgs),
    /// Delta log-likelihood on the auto-regulation network
    ParDelta(RunArgs),
    /// Simulate an observation sequence
    Simulate(RunArgs),
    /// Percentile summary of a per-replicate CSV
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads; 0 uses every core
    #[arg(long)]
    threads: Option<usize>,
}

fn run(kind: Kind, args: RunArgs) -> cpf::Result<()> {
    let overrides = Overrides { seed: args.seed, replicates: args.replicates, threads: args.threads, out: args.out };
    let cfg = ExperimentConfig::load(kind, args.config.as_deref(), &overrides)?;
    let manifest = run_experiment(&cfg)?;
    for f in &manifest.failures {
        eprintln!("replicate {} failed: {}", f.replicate, f.error);
    }
    println!(
        "{}: {} of {} replicates in {:.1}s, output in {}",
        manifest.kind,
        cfg.run.replicates - manifest.failures.len(),
        cfg.run.replicates,
        manifest.elapsed_seconds,
        cfg.run.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::ProportionPaired(a) => run(Kind::ProportionPaired, a),
        Command::DistanceTrace(a) => run(Kind::DistanceTrace, a),
        Command::SparseSpeedup(a) => run(Kind::SparseSpeedup, a),
        Command::Mlpf(a) => run(Kind::Mlpf, a),
        Command::DeltaLoglik(a) => run(Kind::DeltaLoglik, a),
        Command::McmcCompare(a) => run(Kind::McmcCompare, a),
        Command::ParDelta(a) => run(Kind::ParDelta, a),
        Command::Simulate(a) => run(Kind::Simulate, a),
        Command::Aggregate { input, out } => aggregate_file(&input, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
