//! Test support: seeded random instances and independent oracles.
//!
//! Everything in this module exists to check the main implementation from a
//! second angle, so none of it may call into the planner or the LP solver.
//! Value iteration, Monte-Carlo rollouts, and policy grid search are written
//! against [`crate::cmdp`] primitives only. Production code must not depend
//! on this module.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cmdp::{evaluate_policy, Cmdp, Policy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sample_categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn random_simplex_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Exponential draws normalized to the simplex (a flat Dirichlet).
    let mut row: Vec<f64> = (0..n)
        .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
        .collect();
    let sum: f64 = row.iter().sum();
    for v in &mut row {
        *v /= sum;
    }
    row
}

/// A random dense CMDP with rewards and costs uniform in [0, 1], a random
/// initial distribution, and a slack cost budget.
pub fn random_cmdp(n_states: usize, n_actions: usize, discount: f64, seed: u64) -> Cmdp {
    let mut r = rng(seed);
    let mut transition = Array3::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = random_simplex_row(&mut r, n_states);
            for (t, p) in row.iter().enumerate() {
                transition[(s, a, t)] = *p;
            }
        }
    }
    let reward = Array2::from_shape_fn((n_states, n_actions), |_| r.random::<f64>());
    let cost = Array2::from_shape_fn((n_states, n_actions), |_| r.random::<f64>());
    let initial = Array1::from_vec(random_simplex_row(&mut r, n_states));
    let cost_limit = 0.5 / (1.0 - discount);
    Cmdp::new(transition, reward, cost, discount, initial, cost_limit).expect("valid random model")
}

/// A reference model and a perturbed copy sharing rewards, costs, discount,
/// and initial distribution. The copy mixes each transition row with an
/// unrelated random row.
pub fn random_cmdp_pair(
    n_states: usize,
    n_actions: usize,
    discount: f64,
    seed: u64,
) -> (Cmdp, Cmdp) {
    let reference = random_cmdp(n_states, n_actions, discount, seed);
    let mut r = rng(seed.wrapping_add(0x9E37_79B9));
    let eps: f64 = 0.5 * r.random::<f64>();
    let mut t_hat = reference.transition.clone();
    for s in 0..n_states {
        for a in 0..n_actions {
            let noise = random_simplex_row(&mut r, n_states);
            for t in 0..n_states {
                t_hat[(s, a, t)] = (1.0 - eps) * t_hat[(s, a, t)] + eps * noise[t];
            }
        }
    }
    let approx = reference.with_transition(t_hat).expect("mixed kernel is valid");
    (reference, approx)
}

pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> Policy {
    let mut r = rng(seed.wrapping_add(0x51ED_270B));
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let row = random_simplex_row(&mut r, n_actions);
        for a in 0..n_actions {
            probs[(s, a)] = row[a];
        }
    }
    Policy::new(probs).expect("valid random policy")
}

/// Optimal unconstrained discounted return by value iteration, run to a sup
/// norm change below `tol`. Independent of the LP planning path.
pub fn value_iteration_return(cmdp: &Cmdp, tol: f64) -> f64 {
    let n = cmdp.n_states;
    let mut v = Array1::<f64>::zeros(n);
    loop {
        let mut next = Array1::<f64>::zeros(n);
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..cmdp.n_actions {
                let mut q = cmdp.reward[(s, a)];
                for t in 0..n {
                    q += cmdp.discount * cmdp.transition[(s, a, t)] * v[t];
                }
                best = best.max(q);
            }
            next[s] = best;
        }
        let change = next
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        v = next;
        if change < tol {
            break;
        }
    }
    cmdp.initial_dist.dot(&v)
}

/// Monte-Carlo estimates of discounted return and cost, truncated at
/// `horizon` steps. Transitions and actions are sampled; the reward and cost
/// means are accumulated directly. Returns (mean return, mean cost, standard
/// error of the cost mean).
pub fn monte_carlo_eval(
    cmdp: &Cmdp,
    policy: &Policy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> (f64, f64, f64) {
    let mut r = rng(seed.wrapping_add(0xC0FF_EE00));
    let mut rets = Vec::with_capacity(episodes);
    let mut costs = Vec::with_capacity(episodes);
    let init: Vec<f64> = cmdp.initial_dist.iter().copied().collect();
    for _ in 0..episodes {
        let mut s = sample_categorical(&mut r, &init);
        let mut ret = 0.0;
        let mut cost = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let row: Vec<f64> = (0..cmdp.n_actions).map(|a| policy.probs()[(s, a)]).collect();
            let a = sample_categorical(&mut r, &row);
            ret += disc * cmdp.reward[(s, a)];
            cost += disc * cmdp.cost[(s, a)];
            disc *= cmdp.discount;
            let next: Vec<f64> = (0..cmdp.n_states)
                .map(|t| cmdp.transition[(s, a, t)])
                .collect();
            s = sample_categorical(&mut r, &next);
        }
        rets.push(ret);
        costs.push(cost);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let m_ret = mean(&rets);
    let m_cost = mean(&costs);
    let var_cost =
        costs.iter().map(|x| (x - m_cost).powi(2)).sum::<f64>() / (costs.len() - 1) as f64;
    (m_ret, m_cost, (var_cost / costs.len() as f64).sqrt())
}

/// Draws `n` next states from every state-action pair of `cmdp`.
pub fn sample_transitions_per_pair(
    cmdp: &Cmdp,
    n: usize,
    seed: u64,
) -> Vec<(usize, usize, usize)> {
    let mut r = rng(seed.wrapping_add(0xABCD_0123));
    let mut out = Vec::with_capacity(cmdp.n_states * cmdp.n_actions * n);
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            let row: Vec<f64> = (0..cmdp.n_states)
                .map(|t| cmdp.transition[(s, a, t)])
                .collect();
            for _ in 0..n {
                out.push((s, a, sample_categorical(&mut r, &row)));
            }
        }
    }
    out
}

/// Sweep stochastic policies (p0, p1) = P(action 0 | state) over the given
/// closed ranges with `steps` subdivisions per axis, keeping the best
/// feasible return and where it was found.
fn sweep_two_state(
    cmdp: &Cmdp,
    p0_range: (f64, f64),
    p1_range: (f64, f64),
    steps: usize,
) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..=steps {
        let p0 = p0_range.0 + (p0_range.1 - p0_range.0) * i as f64 / steps as f64;
        for j in 0..=steps {
            let p1 = p1_range.0 + (p1_range.1 - p1_range.0) * j as f64 / steps as f64;
            let policy = Policy::new(ndarray::array![[p0, 1.0 - p0], [p1, 1.0 - p1]])
                .expect("grid point is a policy");
            let e = evaluate_policy(cmdp, &policy).expect("evaluation succeeds");
            if e.cost <= cmdp.cost_limit && best.is_none_or(|(_, _, b)| e.ret > b) {
                best = Some((p0, p1, e.ret));
            }
        }
    }
    best
}

/// Best feasible discounted return of a two-state, two-action CMDP over a
/// grid of stochastic policies with the given resolution on the probability
/// of action 0 in each state. Policies whose exact cost exceeds the budget
/// are skipped; returns None if no grid point is feasible.
pub fn grid_search_two_state(cmdp: &Cmdp, resolution: f64) -> Option<f64> {
    assert_eq!(cmdp.n_states, 2);
    assert_eq!(cmdp.n_actions, 2);
    let steps = (1.0 / resolution).round() as usize;
    sweep_two_state(cmdp, (0.0, 1.0), (0.0, 1.0), steps).map(|(_, _, ret)| ret)
}

/// Two-pass grid search: the coarse pass locates the best cell, then the
/// two-cell neighborhood around it is re-swept a hundred times finer, so
/// the reported value is limited by the problem rather than the step size.
/// A constrained optimum sits on the budget boundary between coarse grid
/// points, where a single pass under-reads by up to the return slope times
/// the step.
pub fn grid_search_two_state_refined(cmdp: &Cmdp, resolution: f64) -> Option<f64> {
    assert_eq!(cmdp.n_states, 2);
    assert_eq!(cmdp.n_actions, 2);
    let steps = (1.0 / resolution).round() as usize;
    let (p0, p1, coarse) = sweep_two_state(cmdp, (0.0, 1.0), (0.0, 1.0), steps)?;
    let h = 2.0 * resolution;
    let clamp = |lo: f64| lo.clamp(0.0, 1.0);
    let (_, _, fine) = sweep_two_state(
        cmdp,
        (clamp(p0 - h), clamp(p0 + h)),
        (clamp(p1 - h), clamp(p1 + h)),
        400,
    )
    .expect("the coarse optimum itself lies in the refined window");
    Some(fine.max(coarse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn generators_are_deterministic() {
        let a = random_cmdp(4, 2, 0.9, 42);
        let b = random_cmdp(4, 2, 0.9, 42);
        assert_eq!(a.transition, b.transition);
        assert_eq!(a.reward, b.reward);
    }

    #[test]
    fn value_iteration_matches_exact_evaluation_single_action() {
        // With one action value iteration reduces to policy evaluation.
        let m = random_cmdp(5, 1, 0.9, 3);
        let vi = value_iteration_return(&m, 1e-13);
        let exact = evaluate_policy(&m, &Policy::uniform(5, 1)).unwrap().ret;
        assert_abs_diff_eq!(vi, exact, epsilon = 1e-8);
    }

    #[test]
    fn monte_carlo_agrees_with_exact_evaluation() {
        let m = random_cmdp(4, 2, 0.9, 17);
        let pi = random_policy(4, 2, 23);
        let exact = evaluate_policy(&m, &pi).unwrap();
        let horizon = 400; // truncation bias below 0.9^400 / 0.1
        let (_, mc_cost, sem) = monte_carlo_eval(&m, &pi, 20_000, horizon, 5);
        assert!(
            (mc_cost - exact.cost).abs() < 3.0 * sem + 1e-6,
            "mc {mc_cost} vs exact {}",
            exact.cost
        );
    }
}
