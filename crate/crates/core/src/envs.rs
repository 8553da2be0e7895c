//! Seeded benchmark environments: a stochastic gridworld with Bernoulli
//! rewards and costs, and a velocity-constrained point mass.
//!
//! The gridworld generator returns an expectation-level [`Cmdp`] (the
//! Bernoulli means as reward and cost tables) so planners and exact
//! evaluation work on expectations, while rollouts draw the 0/1
//! realizations. The point mass is a two-state continuous system whose
//! per-step cost is speed, so a cost budget caps how fast an agent may
//! travel on average.

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::cmdp::{Cmdp, Policy};
use crate::ensemble::Sample;
use crate::error::Result;

/// Parameters of the random gridworld family.
#[derive(Debug, Clone)]
pub struct GridworldSpec {
    pub side: usize,
    pub slip: f64,
    /// Beta prior parameters for the Bernoulli reward and cost means.
    pub mean_prior: (f64, f64),
    pub discount: f64,
    /// Budget on the normalized expected discounted cost, i.e. on
    /// (1 - discount) * J_c.
    pub cost_limit: f64,
    pub seed: u64,
}

impl GridworldSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            side: 8,
            slip: 0.2,
            mean_prior: (1.0, 3.0),
            discount: 0.99,
            cost_limit: 0.1,
            seed,
        }
    }
}

/// Grid move in reading order: up, down, left, right. Bumping a wall
/// leaves the position unchanged.
fn grid_move(side: usize, state: usize, dir: usize) -> usize {
    let (row, col) = (state / side, state % side);
    let (nr, nc) = match dir {
        0 => (row.wrapping_sub(1), col),
        1 => (row + 1, col),
        2 => (row, col.wrapping_sub(1)),
        _ => (row, col + 1),
    };
    if nr < side && nc < side {
        nr * side + nc
    } else {
        state
    }
}

/// Builds the gridworld's true dynamics and expected reward/cost tables.
///
/// Movement follows the intended direction with probability 1 - slip;
/// otherwise the agent moves in a direction drawn uniformly over all four
/// (possibly the intended one). Reward and cost means are i.i.d. draws
/// from the Beta prior, one per (state, action), rewards drawn before
/// costs in state-major order.
pub fn generate_gridworld(spec: &GridworldSpec) -> Result<Cmdp> {
    let side = spec.side;
    let ns = side * side;
    let na = 4;
    let mut transition = Array3::zeros((ns, na, ns));
    for s in 0..ns {
        for a in 0..na {
            let mut row = transition.slice_mut(ndarray::s![s, a, ..]);
            row[grid_move(side, s, a)] += 1.0 - spec.slip;
            for dir in 0..4 {
                row[grid_move(side, s, dir)] += spec.slip / 4.0;
            }
        }
    }

    let mut rng = crate::testing::rng(spec.seed);
    let beta = Beta::new(spec.mean_prior.0, spec.mean_prior.1)
        .map_err(|e| crate::error::Error::InvalidArgument(format!("mean prior: {e}")))?;
    let draw_table = |rng: &mut ChaCha8Rng| {
        let mut t = Array2::zeros((ns, na));
        for s in 0..ns {
            for a in 0..na {
                t[(s, a)] = beta.sample(rng);
            }
        }
        t
    };
    let reward = draw_table(&mut rng);
    let cost = draw_table(&mut rng);

    let initial = Array1::from_elem(ns, 1.0 / ns as f64);
    Cmdp::new(
        transition,
        reward,
        cost,
        spec.discount,
        initial,
        spec.cost_limit / (1.0 - spec.discount),
    )
}

/// Realized rollout data from a batch of gridworld episodes.
#[derive(Debug, Clone)]
pub struct GridRollout {
    /// Every (s, a, s') step, across all episodes, in execution order.
    pub transitions: Vec<(usize, usize, usize)>,
    /// Discounted realized return per episode.
    pub episode_returns: Vec<f64>,
    /// Discounted realized cost per episode.
    pub episode_costs: Vec<f64>,
    /// Undiscounted mean reward over the second half of each episode,
    /// an estimate of the policy's long-run per-step rate after the
    /// initial transient.
    pub late_reward_rates: Vec<f64>,
    /// Undiscounted mean cost over the second half of each episode.
    pub late_cost_rates: Vec<f64>,
}

fn sample_index(probs: ArrayView1<'_, f64>, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Runs `episodes` episodes of `episode_len` steps each, restarting from
/// the initial distribution. Per step the draw order is: action, reward
/// realization, cost realization, next state. Rewards and costs realize as
/// Bernoulli draws of the stored means.
pub fn rollout_gridworld(
    cmdp: &Cmdp,
    policy: &Policy,
    episodes: usize,
    episode_len: usize,
    rng: &mut ChaCha8Rng,
) -> GridRollout {
    let mut transitions = Vec::with_capacity(episodes * episode_len);
    let mut episode_returns = Vec::with_capacity(episodes);
    let mut episode_costs = Vec::with_capacity(episodes);
    let mut late_reward_rates = Vec::with_capacity(episodes);
    let mut late_cost_rates = Vec::with_capacity(episodes);
    let half = episode_len / 2;
    for _ in 0..episodes {
        let mut s = sample_index(cmdp.initial_dist.view(), rng);
        let mut g = 1.0;
        let mut ret = 0.0;
        let mut cost = 0.0;
        let mut late_r = 0.0;
        let mut late_c = 0.0;
        for t in 0..episode_len {
            let a = sample_index(policy.probs().row(s), rng);
            let r = f64::from(rng.random::<f64>() < cmdp.reward[(s, a)]);
            let c = f64::from(rng.random::<f64>() < cmdp.cost[(s, a)]);
            let sp = sample_index(cmdp.transition.slice(ndarray::s![s, a, ..]), rng);
            ret += g * r;
            cost += g * c;
            g *= cmdp.discount;
            if t >= half {
                late_r += r;
                late_c += c;
            }
            transitions.push((s, a, sp));
            s = sp;
        }
        let late_len = (episode_len - half).max(1) as f64;
        episode_returns.push(ret);
        episode_costs.push(cost);
        late_reward_rates.push(late_r / late_len);
        late_cost_rates.push(late_c / late_len);
    }
    GridRollout {
        transitions,
        episode_returns,
        episode_costs,
        late_reward_rates,
        late_cost_rates,
    }
}

/// Parameters of the point-mass environment. State is (position,
/// velocity); the action is a bounded acceleration.
#[derive(Debug, Clone)]
pub struct PointMassSpec {
    pub dt: f64,
    pub v_limit: f64,
    /// Standard deviation of the per-step velocity noise.
    pub noise_std: f64,
    /// Weight of the quadratic action penalty in the reward.
    pub action_cost_weight: f64,
    pub episode_len: usize,
    pub discount: f64,
    pub cost_discount: f64,
}

impl Default for PointMassSpec {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_limit: 2.0,
            noise_std: 0.01 * 0.1f64.sqrt(),
            action_cost_weight: 0.1,
            episode_len: 200,
            discount: 0.99,
            cost_discount: 0.99,
        }
    }
}

impl PointMassSpec {
    /// Copy of the spec with process noise removed, for calibration runs.
    pub fn noise_free(&self) -> Self {
        Self {
            noise_std: 0.0,
            ..self.clone()
        }
    }
}

/// One Euler step: velocity integrates the clamped action plus noise and
/// is clipped to the speed limit, position integrates the new velocity.
/// Reward is the new velocity minus the action penalty; cost is speed.
pub fn step_pointmass(
    spec: &PointMassSpec,
    state: [f64; 2],
    action: f64,
    noise: f64,
) -> ([f64; 2], f64, f64) {
    let a = action.clamp(-1.0, 1.0);
    let v = (state[1] + a * spec.dt + noise).clamp(-spec.v_limit, spec.v_limit);
    let x = state[0] + v * spec.dt;
    let reward = v - spec.action_cost_weight * a * a;
    let cost = v.abs();
    ([x, v], reward, cost)
}

/// Full record of one point-mass episode.
#[derive(Debug, Clone)]
pub struct PointMassEpisode {
    pub transitions: Vec<Sample>,
    pub actions: Vec<f64>,
    /// Discounted realized return.
    pub ret: f64,
    /// Discounted realized cost.
    pub cost: f64,
}

/// Runs one episode from `start`, asking `act` for an action at every
/// step. Noise is drawn from `rng` once per step, before the step itself.
pub fn pointmass_episode<F>(
    spec: &PointMassSpec,
    start: [f64; 2],
    mut act: F,
    rng: &mut ChaCha8Rng,
) -> PointMassEpisode
where
    F: FnMut(usize, [f64; 2]) -> f64,
{
    let mut state = start;
    let mut transitions = Vec::with_capacity(spec.episode_len);
    let mut actions = Vec::with_capacity(spec.episode_len);
    let mut g = 1.0;
    let mut gc = 1.0;
    let mut ret = 0.0;
    let mut cost = 0.0;
    for t in 0..spec.episode_len {
        let action = act(t, state).clamp(-1.0, 1.0);
        let z: f64 = StandardNormal.sample(rng);
        let noise = spec.noise_std * z;
        let (next, r, c) = step_pointmass(spec, state, action, noise);
        ret += g * r;
        cost += gc * c;
        g *= spec.discount;
        gc *= spec.cost_discount;
        transitions.push(Sample {
            state: state.to_vec(),
            action: vec![action],
            next_state: next.to_vec(),
            cost: c,
        });
        actions.push(action);
        state = next;
    }
    PointMassEpisode {
        transitions,
        actions,
        ret,
        cost,
    }
}

/// Discounted cost of the noise-free full-throttle-then-coast policy,
/// the calibration reference for the point-mass cost budget.
pub fn bang_coast_cost(spec: &PointMassSpec) -> f64 {
    let quiet = spec.noise_free();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let episode = pointmass_episode(
        &quiet,
        [0.0, 0.0],
        |_, state| {
            if state[1] < quiet.v_limit {
                1.0
            } else {
                0.0
            }
        },
        &mut rng,
    );
    episode.cost
}
