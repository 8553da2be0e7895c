//! `cap selftest`: a fast standalone pass over the core invariants, for
//! checking a build without the full test suite.

use anyhow::{bail, Result};
use cap_core::ccem::{self, CcemConfig, CostEstimator, Dynamics};
use cap_core::tabular::CountTable;
use cap_core::testing::{
    random_cmdp, random_cmdp_pair, random_policy, sample_transitions_per_pair,
    value_iteration_return,
};
use cap_core::{
    exponential_search_init, simulation_gap_check, solve_cmdp, ControllerState, SearchOutcome,
};

type Suite = (&'static str, fn() -> Result<()>);

pub fn run_selftest() -> Result<()> {
    let suites: [Suite; 5] = [
        ("simulation gap bound", gap_bound),
        ("planner agrees with value iteration", planner_vs_value_iteration),
        ("penalty decreases with data", penalty_shrinks),
        ("controller update and search", controller_behavior),
        ("sequence optimizer recovers an analytic optimum", ccem_recovery),
    ];
    let mut failed = 0;
    for (name, suite) in suites {
        match suite() {
            Ok(()) => println!("ok   {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} selftest suite(s) failed");
    }
    Ok(())
}

fn gap_bound() -> Result<()> {
    for seed in 0..20 {
        let (reference, approx) = random_cmdp_pair(5, 3, 0.9, seed);
        let policy = random_policy(5, 3, seed);
        let beta = 1.0 / (1.0 - reference.discount);
        let gap = simulation_gap_check(&reference, &approx, &policy, beta)?;
        if !gap.holds(1e-9) {
            bail!("gap {} exceeds bound {} at seed {seed}", gap.lhs, gap.rhs);
        }
    }
    Ok(())
}

fn planner_vs_value_iteration() -> Result<()> {
    for seed in 100..105 {
        let mut cmdp = random_cmdp(5, 3, 0.9, seed);
        cmdp.cost_limit = f64::MAX;
        let vi = value_iteration_return(&cmdp, 1e-12);
        let plan = match solve_cmdp(&cmdp)? {
            cap_core::PlanOutcome::Feasible(p) => p,
            cap_core::PlanOutcome::Infeasible => bail!("unconstrained program infeasible"),
        };
        if (plan.model_ret - vi).abs() > 1e-6 {
            bail!("LP return {} vs value iteration {} at seed {seed}", plan.model_ret, vi);
        }
    }
    Ok(())
}

fn penalty_shrinks() -> Result<()> {
    let truth = random_cmdp(6, 3, 0.95, 7);
    let mut last = f64::INFINITY;
    for n in [50u64, 500, 5000] {
        let mut counts = CountTable::new(6, 3)?;
        counts.record(&sample_transitions_per_pair(&truth, n as usize, 11))?;
        let u = counts.certified_penalty(0.1, None)?;
        let mean = u.u.iter().sum::<f64>() / u.u.len() as f64;
        if mean >= last {
            bail!("certified penalty failed to shrink: {mean} after n={n}");
        }
        last = mean;
    }
    let empty = CountTable::new(6, 3)?;
    let u = empty.certified_penalty(0.1, None)?;
    if u.u.iter().any(|&x| x != 1.0) {
        bail!("penalty without data must saturate at 1");
    }
    Ok(())
}

fn controller_behavior() -> Result<()> {
    let mut c = ControllerState::new(1.0, 0.1)?;
    let next = c.update(1.5, 1.0)?;
    if (next - 1.05).abs() > 1e-15 {
        bail!("update arithmetic off: {next}");
    }
    let mut c = ControllerState::new(0.01, 1.0)?;
    let clamped = c.update(0.0, 5.0)?;
    if clamped != 0.0 {
        bail!("negative weight not clamped: {clamped}");
    }
    let mut c = ControllerState::new(0.7, 0.25)?;
    for _ in 0..50 {
        c.update(0.3, 0.3)?;
    }
    if c.kappa() != 0.7 {
        bail!("zero error moved the weight: {}", c.kappa());
    }
    match exponential_search_init(|k| k <= 2.0, 10.0, 1e-4)? {
        SearchOutcome::Feasible(k) => {
            if k != 1.25 {
                bail!("search landed at Feasible({k}), expected Feasible(1.25)");
            }
            Ok(())
        }
        other => bail!("search landed at {other:?}, expected Feasible(1.25)"),
    }
}

struct Integrator;

impl Dynamics for Integrator {
    fn members(&self) -> usize {
        1
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn step(&self, _member: usize, state: &[f64], action: &[f64], next: &mut [f64]) -> f64 {
        next[0] = state[0] + action[0];
        // Quadratic bowl peaked at 0.3: optimum is a constant action.
        -(action[0] - 0.3) * (action[0] - 0.3)
    }
    fn uncertainty(&self, _state: &[f64], _action: &[f64]) -> f64 {
        0.0
    }
}

struct FreeCost;

impl CostEstimator for FreeCost {
    fn cost(&self, _state: &[f64], _action: &[f64]) -> f64 {
        0.0
    }
}

fn ccem_recovery() -> Result<()> {
    let mut config = CcemConfig::new(4, vec![-1.0], vec![1.0])?;
    config.population = 200;
    config.elites = 20;
    config.iterations = 10;
    config.particles = 1;
    let plan = ccem::plan(&Integrator, &FreeCost, &[0.0], f64::MAX, 0.0, &config, None, 17)?;
    for t in 0..4 {
        let a = plan[(t, 0)];
        if (a - 0.3).abs() > 1e-2 {
            bail!("step {t} action {a} missed the 0.3 optimum");
        }
    }
    Ok(())
}
