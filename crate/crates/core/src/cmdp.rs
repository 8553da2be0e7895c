//! Constrained MDP primitives: models, policies, occupancy measures, and
//! exact policy evaluation.
//!
//! A constrained MDP is a finite MDP with a second per-step signal, the cost
//! c(s, a), and a budget on the discounted cost. Evaluation here is exact:
//! values are obtained from dense linear solves, never from simulation.

use ndarray::{Array1, Array2, Array3, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance for quantities that must be probabilities (row sums, initial
/// distributions).
pub const PROB_TOL: f64 = 1e-9;

/// Tolerance for derived structural identities (occupancy mass, flow
/// conservation).
pub const STRUCTURAL_TOL: f64 = 1e-6;

/// A finite constrained MDP with rewards and costs in `[0, 1]`.
///
/// `transition[[s, a, t]]` is the probability of moving to state `t` when
/// taking action `a` in state `s`. `cost_limit` is a budget on the expected
/// discounted cost, in the same units as [`EvalResult::cost`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cmdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Array3<f64>,
    pub reward: Array2<f64>,
    pub cost: Array2<f64>,
    pub discount: f64,
    pub initial_dist: Array1<f64>,
    pub cost_limit: f64,
}

impl Cmdp {
    pub fn new(
        transition: Array3<f64>,
        reward: Array2<f64>,
        cost: Array2<f64>,
        discount: f64,
        initial_dist: Array1<f64>,
        cost_limit: f64,
    ) -> Result<Self> {
        let (n_states, n_actions, n_next) = transition.dim();
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        if n_next != n_states {
            return Err(Error::ShapeMismatch {
                expected: format!("transition [{n_states}, {n_actions}, {n_states}]"),
                got: format!("[{n_states}, {n_actions}, {n_next}]"),
            });
        }
        for m in [&reward, &cost] {
            if m.dim() != (n_states, n_actions) {
                return Err(Error::ShapeMismatch {
                    expected: format!("[{n_states}, {n_actions}]"),
                    got: format!("[{}, {}]", m.nrows(), m.ncols()),
                });
            }
        }
        if initial_dist.len() != n_states {
            return Err(Error::ShapeMismatch {
                expected: format!("initial distribution of length {n_states}"),
                got: format!("length {}", initial_dist.len()),
            });
        }
        if !(0.0 < discount && discount < 1.0) {
            return Err(Error::InvalidModel(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        if !(cost_limit >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "cost limit must be nonnegative, got {cost_limit}"
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = transition.slice(ndarray::s![s, a, ..]);
                if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "transition probabilities for ({s}, {a}) must be nonnegative"
                    )));
                }
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidModel(format!(
                        "transition row ({s}, {a}) sums to {sum}, expected 1"
                    )));
                }
            }
        }
        for (name, m) in [("reward", &reward), ("cost", &cost)] {
            if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidModel(format!(
                    "{name} entries must lie in [0, 1]"
                )));
            }
        }
        if initial_dist.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidModel(
                "initial distribution must be nonnegative".into(),
            ));
        }
        let mass: f64 = initial_dist.sum();
        if (mass - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidModel(format!(
                "initial distribution sums to {mass}, expected 1"
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            cost,
            discount,
            initial_dist,
            cost_limit,
        })
    }

    /// Replaces the transition kernel, keeping rewards, costs, discount,
    /// initial distribution, and budget. Used to build planning models from a
    /// fitted kernel.
    pub fn with_transition(&self, transition: Array3<f64>) -> Result<Self> {
        Self::new(
            transition,
            self.reward.clone(),
            self.cost.clone(),
            self.discount,
            self.initial_dist.clone(),
            self.cost_limit,
        )
    }
}

/// A stationary stochastic policy; `probs[[s, a]]` is the probability of
/// action `a` in state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Array2<f64>,
}

impl Policy {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for (s, row) in probs.outer_iter().enumerate() {
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidPolicy(format!(
                    "action probabilities for state {s} must be nonnegative"
                )));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "action probabilities for state {s} sum to {sum}"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }
}

/// Discounted state-action visitation frequencies, normalized to total mass 1.
///
/// Entries may come out of a linear program a hair below zero; anything above
/// `-1e-9` is clamped to zero on construction, more negative values are
/// rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    rho: Array2<f64>,
}

impl OccupancyMeasure {
    pub fn new(mut rho: Array2<f64>) -> Result<Self> {
        for v in rho.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite("occupancy entry".into()));
            }
            if *v < -PROB_TOL {
                return Err(Error::InvalidArgument(format!(
                    "occupancy entry {v} below -{PROB_TOL}"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mass: f64 = rho.sum();
        if (mass - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "occupancy mass is {mass}, expected 1"
            )));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> &Array2<f64> {
        &self.rho
    }

    /// Expected value of `table` under this occupancy, `sum rho(s,a) table(s,a)`.
    pub fn weigh(&self, table: &Array2<f64>) -> f64 {
        self.rho
            .iter()
            .zip(table.iter())
            .map(|(r, t)| r * t)
            .sum()
    }

    /// Largest violation of the stationarity (flow conservation) equations of
    /// `cmdp` by this occupancy measure.
    pub fn flow_residual(&self, cmdp: &Cmdp) -> f64 {
        let g = cmdp.discount;
        let mut worst = 0.0f64;
        for s in 0..cmdp.n_states {
            let mut lhs = 0.0;
            for a in 0..cmdp.n_actions {
                lhs += self.rho[(s, a)];
            }
            let mut inflow = 0.0;
            for sp in 0..cmdp.n_states {
                for ap in 0..cmdp.n_actions {
                    inflow += cmdp.transition[(sp, ap, s)] * self.rho[(sp, ap)];
                }
            }
            let rhs = (1.0 - g) * cmdp.initial_dist[s] + g * inflow;
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }
}

/// Exact discounted return and discounted cost of a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub ret: f64,
    pub cost: f64,
}

/// Both sides of the model-error cost bound, see [`simulation_gap_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub beta: f64,
}

impl GapCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

fn check_policy_shape(cmdp: &Cmdp, policy: &Policy) -> Result<()> {
    if policy.n_states() != cmdp.n_states || policy.n_actions() != cmdp.n_actions {
        return Err(Error::ShapeMismatch {
            expected: format!("policy [{}, {}]", cmdp.n_states, cmdp.n_actions),
            got: format!("[{}, {}]", policy.n_states(), policy.n_actions()),
        });
    }
    Ok(())
}

/// Marginal transition matrix and expected reward / cost under a policy.
fn policy_kernel(cmdp: &Cmdp, policy: &Policy) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let n = cmdp.n_states;
    let mut p = Array2::zeros((n, n));
    let mut r = Array1::zeros(n);
    let mut c = Array1::zeros(n);
    for s in 0..n {
        for a in 0..cmdp.n_actions {
            let w = policy.probs()[(s, a)];
            if w == 0.0 {
                continue;
            }
            r[s] += w * cmdp.reward[(s, a)];
            c[s] += w * cmdp.cost[(s, a)];
            for t in 0..n {
                p[(s, t)] += w * cmdp.transition[(s, a, t)];
            }
        }
    }
    (p, r, c)
}

/// Evaluates a policy exactly by solving `(I - gamma P_pi) v = r_pi` for the
/// reward and cost signals, then weighting by the initial distribution.
pub fn evaluate_policy(cmdp: &Cmdp, policy: &Policy) -> Result<EvalResult> {
    check_policy_shape(cmdp, policy)?;
    let n = cmdp.n_states;
    let (p, r, c) = policy_kernel(cmdp, policy);
    let mut lhs = Array2::eye(n);
    lhs.scaled_add(-cmdp.discount, &p);
    let mut rhs = Array2::zeros((n, 2));
    rhs.column_mut(0).assign(&r);
    rhs.column_mut(1).assign(&c);
    let values = linalg::solve_multi(&lhs, &rhs)?;
    let ret = cmdp.initial_dist.dot(&values.column(0));
    let cost = cmdp.initial_dist.dot(&values.column(1));
    Ok(EvalResult { ret, cost })
}

/// Computes the normalized discounted occupancy measure of a policy by solving
/// the stationarity equations exactly.
pub fn occupancy_of_policy(cmdp: &Cmdp, policy: &Policy) -> Result<OccupancyMeasure> {
    check_policy_shape(cmdp, policy)?;
    let n = cmdp.n_states;
    let (p, _, _) = policy_kernel(cmdp, policy);
    // d = (1 - gamma) mu0 + gamma P_pi^T d
    let mut lhs = Array2::eye(n);
    lhs.scaled_add(-cmdp.discount, &p.t().to_owned());
    let rhs = cmdp.initial_dist.mapv(|v| v * (1.0 - cmdp.discount));
    let d = linalg::solve(&lhs, &rhs)?;
    let mut rho = Array2::zeros((n, cmdp.n_actions));
    for s in 0..n {
        for a in 0..cmdp.n_actions {
            rho[(s, a)] = d[s] * policy.probs()[(s, a)];
        }
    }
    OccupancyMeasure::new(rho)
}

/// Recovers a policy from an occupancy measure by row normalization. States
/// with no visitation mass get a uniform action distribution.
pub fn policy_of_occupancy(rho: &OccupancyMeasure) -> Policy {
    let r = rho.rho();
    let (n_states, n_actions) = r.dim();
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let mass: f64 = (0..n_actions).map(|a| r[(s, a)]).sum();
        if mass < 1e-12 {
            for a in 0..n_actions {
                probs[(s, a)] = 1.0 / n_actions as f64;
            }
        } else {
            for a in 0..n_actions {
                probs[(s, a)] = r[(s, a)] / mass;
            }
        }
    }
    Policy::new(probs).expect("normalized rows form a policy")
}

/// Total variation distance between two distributions on the same support.
///
/// Callers are expected to pass probability vectors; the function itself only
/// assumes equal lengths.
pub fn tv_distance(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Checks the cost-gap bound between a reference model and an approximation:
/// the cost advantage of the true model over the approximate one, measured by
/// exact occupancies, is at most `gamma * beta` times the occupancy-weighted
/// total variation between the kernels.
///
/// Both models must share state/action shapes and the discount; the cost
/// signal is read from `reference`.
pub fn simulation_gap_check(
    reference: &Cmdp,
    approx: &Cmdp,
    policy: &Policy,
    beta: f64,
) -> Result<GapCheck> {
    if reference.n_states != approx.n_states || reference.n_actions != approx.n_actions {
        return Err(Error::ShapeMismatch {
            expected: format!("[{}, {}]", reference.n_states, reference.n_actions),
            got: format!("[{}, {}]", approx.n_states, approx.n_actions),
        });
    }
    if reference.discount != approx.discount {
        return Err(Error::InvalidArgument(format!(
            "discounts differ: {} vs {}",
            reference.discount, approx.discount
        )));
    }
    let rho_ref = occupancy_of_policy(reference, policy)?;
    let rho_approx = occupancy_of_policy(approx, policy)?;
    let mut lhs = 0.0;
    let mut weighted_tv = 0.0;
    for s in 0..reference.n_states {
        for a in 0..reference.n_actions {
            let c = reference.cost[(s, a)];
            lhs += (rho_ref.rho()[(s, a)] - rho_approx.rho()[(s, a)]) * c;
            let tv = tv_distance(
                approx.transition.slice(ndarray::s![s, a, ..]),
                reference.transition.slice(ndarray::s![s, a, ..]),
            );
            weighted_tv += rho_approx.rho()[(s, a)] * tv;
        }
    }
    Ok(GapCheck {
        lhs,
        rhs: reference.discount * beta * weighted_tv,
        beta,
    })
}
