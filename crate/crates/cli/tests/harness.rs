//! End-to-end checks of the training harness: output files agree with an
//! independent reader, runs are reproducible, the command line behaves,
//! and the exact evaluator is touched exactly once per episode.

use std::fs;
use std::path::Path;
use std::process::Command;

use cap_cli::config::{Experiment, Mode, RunConfig};
use cap_cli::records::read_seed_csv;
use cap_cli::summary::{read_summary, FINAL_WINDOW};
use cap_cli::{execute, gridworld, pointmass};

fn grid_config(mode: Mode, seeds: usize, episodes: usize) -> RunConfig {
    let mut cfg = RunConfig::for_experiment(Experiment::Gridworld);
    cfg.mode = mode;
    cfg.seeds = seeds;
    cfg.episodes = episodes;
    cfg
}

fn tiny_pointmass(mode: Mode) -> RunConfig {
    let mut cfg = RunConfig::for_experiment(Experiment::Pointmass);
    cfg.mode = mode;
    cfg.seeds = 1;
    cfg.episodes = 2;
    cfg.explore_steps = 400;
    cfg.population = 30;
    cfg.elites = 5;
    cfg.iterations = 2;
    cfg.horizon = 8;
    cfg.particles = 2;
    cfg.eval_episodes = 3;
    cfg
}

fn cap_binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cap"))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The summary must match what an unrelated CSV parser recomputes from the
/// files on disk, so the two output formats can never drift apart.
#[test]
fn summary_matches_independent_csv_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = grid_config(Mode::Adaptive, 3, 6);
    cfg.out = Some(dir.path().to_path_buf());
    let (_, summary) = execute(&cfg).unwrap();

    // Parse every CSV with the csv crate rather than our own reader.
    let mut per_seed: Vec<Vec<Vec<f64>>> = Vec::new();
    for seed in 0..3 {
        let path = dir.path().join(format!("adaptive-seed{seed}.csv"));
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let mut rows = Vec::new();
        for row in reader.records() {
            let row = row.unwrap();
            let field = |i: usize| -> f64 { row.get(i).unwrap().parse().unwrap() };
            // seed,episode,return,cost,true_cost,cum_violations,kappa,...
            rows.push(vec![field(2), field(3), field(4), field(5), field(6)]);
        }
        assert_eq!(rows.len(), 6);
        per_seed.push(rows);
    }

    let window = FINAL_WINDOW.min(6);
    let tail_mean = |col: usize| -> Vec<f64> {
        per_seed
            .iter()
            .map(|rows| {
                rows[rows.len() - window..].iter().map(|r| r[col]).sum::<f64>() / window as f64
            })
            .collect()
    };
    let (ret_mean, ret_std) = mean_std(&tail_mean(0));
    let (cost_mean, _) = mean_std(&tail_mean(1));
    let (true_cost_mean, _) = mean_std(&tail_mean(2));
    let (kappa_mean, _) = mean_std(&tail_mean(4));
    let finals: Vec<f64> = per_seed.iter().map(|rows| rows[5][3]).collect();
    let (viol_mean, _) = mean_std(&finals);

    let w = &summary.final_window;
    assert!((w.return_mean - ret_mean).abs() < 1e-9);
    assert!((w.return_std - ret_std).abs() < 1e-9);
    assert!((w.cost_mean - cost_mean).abs() < 1e-9);
    assert!((w.true_cost_mean - true_cost_mean).abs() < 1e-9);
    assert!((w.kappa_mean - kappa_mean).abs() < 1e-9);
    assert!((w.violations_mean - viol_mean).abs() < 1e-9);

    // Spot-check a per-episode row as well.
    let first: Vec<f64> = per_seed.iter().map(|rows| rows[0][1]).collect();
    let (first_cost_mean, first_cost_std) = mean_std(&first);
    assert!((summary.per_episode[0].cost_mean - first_cost_mean).abs() < 1e-9);
    assert!((summary.per_episode[0].cost_std - first_cost_std).abs() < 1e-9);

    // And the summary on disk equals the one returned.
    let on_disk = read_summary(&dir.path().join("summary.json")).unwrap();
    assert_eq!(on_disk.final_window.return_mean, w.return_mean);
    assert_eq!(on_disk.per_episode.len(), 6);
}

/// The exact evaluator exists for metrics only: once per episode, never
/// inside the learner.
#[test]
fn true_model_is_consulted_once_per_episode() {
    let runs = gridworld::run_gridworld(&grid_config(Mode::Adaptive, 2, 3)).unwrap();
    for run in &runs {
        assert_eq!(run.true_eval_calls, 3);
    }
    let runs = pointmass::run_pointmass(&tiny_pointmass(Mode::Fixed(0.0))).unwrap();
    assert_eq!(runs[0].true_eval_calls, 2);
}

#[test]
fn library_runs_are_bitwise_deterministic() {
    let cfg = grid_config(Mode::Adaptive, 2, 4);
    let a = gridworld::run_gridworld(&cfg).unwrap();
    let b = gridworld::run_gridworld(&cfg).unwrap();
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.seed, rb.seed);
        for (x, y) in ra.records.iter().zip(&rb.records) {
            assert_eq!(x.ret.to_bits(), y.ret.to_bits());
            assert_eq!(x.cost.to_bits(), y.cost.to_bits());
            assert_eq!(x.true_cost.to_bits(), y.true_cost.to_bits());
            assert_eq!(x.kappa.to_bits(), y.kappa.to_bits());
            assert_eq!(x.cum_violations, y.cum_violations);
        }
    }
}

/// Flags beat the config file, which beats the defaults.
#[test]
fn config_file_then_flags_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    fs::write(&cfg_path, r#"{ "episodes": 4, "master_seed": 7 }"#).unwrap();
    let out = dir.path().join("out");
    let status = cap_binary()
        .args(["gridworld", "--seeds", "1", "--episodes", "3", "--mode", "fixed:0"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = read_summary(&out.join("summary.json")).unwrap();
    assert_eq!(summary.episodes, 3, "command-line flag must win");
    assert_eq!(summary.master_seed, 7, "config file must beat the default");
}

#[test]
fn fixed_and_none_modes_pin_kappa() {
    let dir = tempfile::tempdir().unwrap();
    for (mode, slug, expected) in
        [("fixed:0.05", "fixed-0.05", 0.05), ("none", "none", 0.0)]
    {
        let out = dir.path().join(slug);
        let status = cap_binary()
            .args(["gridworld", "--seeds", "1", "--episodes", "3", "--mode", mode])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let records = read_seed_csv(&out.join(format!("{slug}-seed0.csv"))).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.kappa == expected));
    }
}

#[test]
fn single_seed_summary_has_zero_spread() {
    let (_, summary) = execute(&grid_config(Mode::Fixed(0.0), 1, 4)).unwrap();
    let w = &summary.final_window;
    for std in [w.return_std, w.cost_std, w.true_cost_std, w.kappa_std, w.violations_std] {
        assert_eq!(std, 0.0);
    }
    for e in &summary.per_episode {
        assert_eq!(e.return_std, 0.0);
        assert_eq!(e.cost_std, 0.0);
    }
}

#[test]
fn check_subcommand_gates_on_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = cap_binary()
        .args(["gridworld", "--seeds", "1", "--episodes", "3", "--mode", "fixed:0"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = out.join("summary.json");

    let passing = dir.path().join("pass.json");
    fs::write(
        &passing,
        r#"{ "checks": [
            { "metric": "final_window.cost_mean", "op": "le", "value": 1000.0 },
            { "metric": "final_window.kappa_mean", "op": "ge", "value": 0.0 }
        ] }"#,
    )
    .unwrap();
    let status = cap_binary()
        .arg("check")
        .arg("--against")
        .arg(&summary)
        .arg("--thresholds")
        .arg(&passing)
        .status()
        .unwrap();
    assert!(status.success());

    let failing = dir.path().join("fail.json");
    fs::write(
        &failing,
        r#"{ "checks": [ { "metric": "final_window.cost_mean", "op": "lt", "value": -1.0 } ] }"#,
    )
    .unwrap();
    let status = cap_binary()
        .arg("check")
        .arg("--against")
        .arg(&summary)
        .arg("--thresholds")
        .arg(&failing)
        .status()
        .unwrap();
    assert!(!status.success(), "an unmet threshold must fail the process");
}

/// Count-based penalty modes need a discrete state space; the continuous
/// task must refuse them up front rather than misbehave later.
#[test]
fn pointmass_rejects_tabular_modes() {
    for mode in ["certified:0.1", "certified-training:0.1,5", "oracle"] {
        let output = cap_binary()
            .args(["pointmass", "--seeds", "1", "--episodes", "1", "--mode", mode])
            .output()
            .unwrap();
        assert!(!output.status.success(), "mode {mode} must be rejected");
    }
}

/// Re-running with one changed knob must change outputs; the knob is not
/// silently ignored.
#[test]
fn master_seed_changes_the_run() {
    let base = grid_config(Mode::Adaptive, 1, 3);
    let mut moved = base.clone();
    moved.master_seed = 1;
    let a = gridworld::run_gridworld(&base).unwrap();
    let b = gridworld::run_gridworld(&moved).unwrap();
    let differs = a[0]
        .records
        .iter()
        .zip(&b[0].records)
        .any(|(x, y)| x.ret.to_bits() != y.ret.to_bits());
    assert!(differs);
}

/// Keep `Path` in the signature list honest: files land exactly where the
/// out directory says.
#[test]
fn out_directory_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("run");
    let mut cfg = grid_config(Mode::Fixed(0.1), 2, 3);
    cfg.out = Some(out.clone());
    execute(&cfg).unwrap();
    assert!(out.join("summary.json").is_file());
    assert!(out.join("fixed-0.1-seed0.csv").is_file());
    assert!(out.join("fixed-0.1-seed1.csv").is_file());
    assert!(!Path::new(&out.join("fixed-0.1-seed2.csv")).exists());
}
