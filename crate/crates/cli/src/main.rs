use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cap_cli::config::{Experiment, Mode, PartialConfig, RunConfig};
use cap_cli::{check, execute, selftest};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cap",
    about = "Budget-constrained model-based RL benchmark runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tabular gridworld benchmark.
    Gridworld(RunArgs),
    /// Run the continuous point-mass benchmark.
    Pointmass(RunArgs),
    /// Run a quick standalone pass over the core invariants.
    Selftest,
    /// Compare a summary.json against a threshold file.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Independent seeds to run.
    #[arg(long)]
    seeds: Option<usize>,
    /// Training episodes per seed.
    #[arg(long)]
    episodes: Option<usize>,
    /// adaptive | fixed:<kappa> | certified:<delta> |
    /// certified-training:<delta>,<rounds> | none | oracle
    #[arg(long)]
    mode: Option<Mode>,
    /// Controller gain for the adaptive mode.
    #[arg(long)]
    alpha: Option<f64>,
    /// Master seed; all per-seed randomness derives from it.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Output directory for CSVs and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// summary.json produced by a run.
    #[arg(long)]
    against: PathBuf,
    /// Threshold file with the comparisons to apply.
    #[arg(long)]
    thresholds: PathBuf,
}

fn build_config(experiment: Experiment, args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::for_experiment(experiment);
    if let Some(path) = &args.config {
        PartialConfig::from_file(path)?.apply(&mut cfg);
    }
    cfg.experiment = experiment;
    if let Some(v) = args.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = args.episodes {
        cfg.episodes = v;
    }
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if cfg.out.is_none() {
        cfg.out = Some(PathBuf::from(format!("cap-runs/{experiment}")));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<()> {
    let cfg = build_config(experiment, args)?;
    let (_, summary) = execute(&cfg)?;
    let w = &summary.final_window;
    println!(
        "{} {}: {} seeds x {} episodes (master seed {})",
        summary.experiment, summary.mode, summary.seeds, summary.episodes, summary.master_seed
    );
    println!(
        "final {} episodes: return {:.4} +- {:.4}, cost {:.4} +- {:.4} (limit {:.4})",
        w.episodes, w.return_mean, w.return_std, w.cost_mean, w.cost_std, summary.cost_limit
    );
    println!(
        "violations {:.2} +- {:.2}, kappa {:.4}, fallback rate {:.3}",
        w.violations_mean, w.violations_std, w.kappa_mean, w.fallback_rate
    );
    if let Some(out) = &cfg.out {
        println!("wrote {}", out.join("summary.json").display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gridworld(args) => run(Experiment::Gridworld, args),
        Command::Pointmass(args) => run(Experiment::Pointmass, args),
        Command::Selftest => selftest::run_selftest(),
        Command::Check(args) => match check::run_check(&args.against, &args.thresholds) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
