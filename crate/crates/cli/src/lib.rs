//! Experiment harness and command-line front end: run the gridworld or
//! point-mass benchmark under a chosen penalty mode, write per-seed CSVs
//! and a cross-seed summary, and compare summaries to threshold files.

use anyhow::Result;
use cap_core::envs::{bang_coast_cost, GridworldSpec, PointMassSpec};

pub mod check;
pub mod config;
pub mod gridworld;
pub mod pointmass;
pub mod records;
pub mod selftest;
pub mod summary;

pub use config::{Experiment, Mode, PartialConfig, RunConfig};
pub use records::{SeedRun, TrainRecord};
pub use summary::{summarize, Summary};

/// Budget in the units the run's cost columns use: the normalized limit
/// for the gridworld, the calibrated discounted-speed limit for the point
/// mass.
pub fn experiment_cost_limit(experiment: Experiment) -> f64 {
    match experiment {
        Experiment::Gridworld => GridworldSpec::new(0).cost_limit,
        Experiment::Pointmass => 0.5 * bang_coast_cost(&PointMassSpec::default()),
    }
}

/// Runs the configured experiment, writes CSVs and summary.json when an
/// output directory is set, and returns both the raw per-seed records and
/// the summary.
pub fn execute(config: &RunConfig) -> Result<(Vec<SeedRun>, Summary)> {
    let runs = match config.experiment {
        Experiment::Gridworld => gridworld::run_gridworld(config)?,
        Experiment::Pointmass => pointmass::run_pointmass(config)?,
    };
    let summary = summarize(config, experiment_cost_limit(config.experiment), &runs)?;
    if let Some(out) = &config.out {
        let slug = config.mode.slug();
        for run in &runs {
            records::write_seed_csv(out, &slug, run)?;
        }
        summary::write_summary(out, &summary)?;
    }
    Ok((runs, summary))
}
