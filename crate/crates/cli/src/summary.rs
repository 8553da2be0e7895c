//! Cross-seed aggregation of training records into the run summary
//! document emitted as `summary.json`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::records::SeedRun;

/// How many trailing episodes the final-window aggregates cover (fewer if
/// the run is shorter).
pub const FINAL_WINDOW: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
    /// Cumulative violation count by this episode, averaged across seeds.
    pub violations_mean: f64,
    pub violations_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
}

/// Aggregates over the last [`FINAL_WINDOW`] episodes. Per-seed window
/// means first, then mean and population standard deviation across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalWindow {
    pub episodes: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub true_cost_mean: f64,
    pub true_cost_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    /// Final cumulative violation count.
    pub violations_mean: f64,
    pub violations_std: f64,
    /// Fraction of all episodes (whole run, not just the window) that
    /// deployed the infeasibility fallback.
    pub fallback_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub mode: String,
    pub seeds: usize,
    pub episodes: usize,
    pub master_seed: u64,
    /// Budget in the same units as the cost columns.
    pub cost_limit: f64,
    pub per_episode: Vec<EpisodeStat>,
    pub final_window: FinalWindow,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summarize(config: &RunConfig, cost_limit: f64, runs: &[SeedRun]) -> Result<Summary> {
    if runs.is_empty() {
        bail!("nothing to summarize: no seed runs");
    }
    let episodes = runs[0].records.len();
    if episodes == 0 || runs.iter().any(|r| r.records.len() != episodes) {
        bail!("seed runs must all cover the same nonzero episode count");
    }

    let mut per_episode = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let col = |f: &dyn Fn(&crate::records::TrainRecord) -> f64| -> Vec<f64> {
            runs.iter().map(|r| f(&r.records[e])).collect()
        };
        let (return_mean, return_std) = mean_std(&col(&|r| r.ret));
        let (cost_mean, cost_std) = mean_std(&col(&|r| r.cost));
        let (violations_mean, violations_std) = mean_std(&col(&|r| r.cum_violations as f64));
        let (kappa_mean, kappa_std) = mean_std(&col(&|r| r.kappa));
        per_episode.push(EpisodeStat {
            episode: e + 1,
            return_mean,
            return_std,
            cost_mean,
            cost_std,
            violations_mean,
            violations_std,
            kappa_mean,
            kappa_std,
        });
    }

    let window = FINAL_WINDOW.min(episodes);
    let window_mean = |f: &dyn Fn(&crate::records::TrainRecord) -> f64| -> Vec<f64> {
        runs.iter()
            .map(|r| {
                let tail = &r.records[episodes - window..];
                tail.iter().map(f).sum::<f64>() / window as f64
            })
            .collect()
    };
    let (return_mean, return_std) = mean_std(&window_mean(&|r| r.ret));
    let (cost_mean, cost_std) = mean_std(&window_mean(&|r| r.cost));
    let (true_cost_mean, true_cost_std) = mean_std(&window_mean(&|r| r.true_cost));
    let (kappa_mean, kappa_std) = mean_std(&window_mean(&|r| r.kappa));
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| r.records[episodes - 1].cum_violations as f64)
        .collect();
    let (violations_mean, violations_std) = mean_std(&finals);
    let fallbacks: usize = runs
        .iter()
        .map(|r| r.records.iter().filter(|rec| rec.fallback).count())
        .sum();
    let final_window = FinalWindow {
        episodes: window,
        return_mean,
        return_std,
        cost_mean,
        cost_std,
        true_cost_mean,
        true_cost_std,
        kappa_mean,
        kappa_std,
        violations_mean,
        violations_std,
        fallback_rate: fallbacks as f64 / (runs.len() * episodes) as f64,
    };

    Ok(Summary {
        experiment: config.experiment.to_string(),
        mode: config.mode.to_string(),
        seeds: runs.len(),
        episodes,
        master_seed: config.master_seed,
        cost_limit,
        per_episode,
        final_window,
    })
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("summary.json");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, summary).context("writing summary.json")?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
