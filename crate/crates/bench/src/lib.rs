//! Shared fixtures for the benchmark targets: realistic problem instances
//! built once, outside the measured region.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cap_core::ccem::{CostEstimator, Dynamics};
use cap_core::cmdp::Cmdp;
use cap_core::ensemble::{fit_with, CostModel, EnsembleModel, FitOptions, Sample, UncertaintyEstimator};
use cap_core::envs::{generate_gridworld, pointmass_episode, GridworldSpec, PointMassSpec};
use cap_core::planner::PenaltyWeighting;
use cap_core::tabular::CountTable;
use cap_core::testing;

/// The 64-state benchmark world.
pub fn gridworld() -> Cmdp {
    generate_gridworld(&GridworldSpec::new(0)).expect("benchmark world generates")
}

/// A mid-training penalty configuration for the gridworld: practical
/// uncertainty from a partially filled count table.
pub fn partial_counts(cmdp: &Cmdp, per_pair: usize) -> CountTable {
    let mut counts = CountTable::new(cmdp.n_states, cmdp.n_actions).expect("counts allocate");
    counts
        .record(&testing::sample_transitions_per_pair(cmdp, per_pair, 7))
        .expect("indices in range");
    counts
}

/// Adaptive-mode weighting at a representative penalty weight.
pub fn adaptive_weighting(counts: &CountTable, kappa: f64) -> PenaltyWeighting {
    PenaltyWeighting::adaptive(kappa, counts.practical_penalty().u).expect("valid weighting")
}

/// An exploration buffer from the continuous task, the input to model
/// fitting.
pub fn exploration_buffer(steps: usize) -> Vec<Sample> {
    let spec = PointMassSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut buffer = Vec::with_capacity(steps);
    let episode_len = spec.episode_len;
    let episodes = steps.div_ceil(episode_len);
    for _ in 0..episodes {
        let actions: Vec<f64> = (0..episode_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ep = pointmass_episode(&spec, [0.0, 0.0], |t, _| actions[t], &mut rng);
        buffer.extend(ep.transitions);
    }
    buffer.truncate(steps);
    buffer
}

/// Ensemble and cost model fitted on the exploration buffer.
pub fn fitted_models(buffer: &[Sample]) -> (EnsembleModel, CostModel) {
    fit_with(buffer, &FitOptions::default(), 11).expect("fit succeeds")
}

/// Learned point-mass dynamics exactly as the training harness adapts
/// them, with a fixed uncertainty scale.
pub struct BenchDynamics {
    pub model: EnsembleModel,
    pub spec: PointMassSpec,
    pub u_scale: f64,
}

impl Dynamics for BenchDynamics {
    fn members(&self) -> usize {
        self.model.members()
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn step(&self, member: usize, state: &[f64], action: &[f64], next: &mut [f64]) -> f64 {
        self.model.predict_next_into(member, state, action, next);
        let a = action[0].clamp(-1.0, 1.0);
        next[1] - self.spec.action_cost_weight * a * a
    }

    fn uncertainty(&self, state: &[f64], action: &[f64]) -> f64 {
        self.model.uncertainty(state, action, UncertaintyEstimator::MeanDisagreement) / self.u_scale
    }
}

/// Learned cost head over predicted transitions.
pub struct BenchCost {
    pub model: CostModel,
}

impl CostEstimator for BenchCost {
    fn cost(&self, state: &[f64], action: &[f64]) -> f64 {
        self.model.predict(state, action).max(0.0)
    }
}

