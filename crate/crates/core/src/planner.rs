//! Occupancy-measure planning for constrained MDPs.
//!
//! The planner optimizes over normalized discounted occupancy measures
//! rho(s, a): maximize expected reward subject to the stationarity (flow)
//! equations and a budget on expected cost, all as one linear program. A
//! penalty table can be folded into the cost before solving, which is how
//! model uncertainty is priced: pessimism about a state-action pair makes it
//! look more expensive to visit.

use ndarray::{Array1, Array2};

use crate::cmdp::{policy_of_occupancy, Cmdp, OccupancyMeasure, Policy};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpOutcome};

/// How a per-pair penalty table u(s, a) is weighted into the planning cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyMode {
    /// Plan on the raw cost.
    None,
    /// Weight by `discount * beta`, the coefficient under which a penalty
    /// dominating the kernel error certifies the plan's true feasibility.
    Certified { beta: f64 },
    /// Weight by a scalar chosen by feedback control rather than theory.
    Adaptive { kappa: f64 },
}

/// A penalty table together with its weighting mode. The effective planning
/// cost is `c(s, a) + weight * base(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeighting {
    mode: PenaltyMode,
    base: Array2<f64>,
}

impl PenaltyWeighting {
    pub fn none(n_states: usize, n_actions: usize) -> Self {
        Self {
            mode: PenaltyMode::None,
            base: Array2::zeros((n_states, n_actions)),
        }
    }

    pub fn certified(beta: f64, base: Array2<f64>) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "certified weight requires positive finite beta, got {beta}"
            )));
        }
        Self::checked(PenaltyMode::Certified { beta }, base)
    }

    pub fn adaptive(kappa: f64, base: Array2<f64>) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "adaptive weight requires nonnegative finite kappa, got {kappa}"
            )));
        }
        Self::checked(PenaltyMode::Adaptive { kappa }, base)
    }

    fn checked(mode: PenaltyMode, base: Array2<f64>) -> Result<Self> {
        if base.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "penalty table entries must be nonnegative and finite".into(),
            ));
        }
        Ok(Self { mode, base })
    }

    pub fn mode(&self) -> PenaltyMode {
        self.mode
    }

    pub fn base(&self) -> &Array2<f64> {
        &self.base
    }

    /// Scalar multiplier applied to the base table at the given discount.
    pub fn effective_weight(&self, discount: f64) -> f64 {
        match self.mode {
            PenaltyMode::None => 0.0,
            PenaltyMode::Certified { beta } => discount * beta,
            PenaltyMode::Adaptive { kappa } => kappa,
        }
    }

    /// The planning cost table `c + weight * base`.
    pub fn penalized_cost(&self, cmdp: &Cmdp) -> Result<Array2<f64>> {
        if self.base.dim() != (cmdp.n_states, cmdp.n_actions) {
            return Err(Error::ShapeMismatch {
                expected: format!("penalty table [{}, {}]", cmdp.n_states, cmdp.n_actions),
                got: format!("[{}, {}]", self.base.nrows(), self.base.ncols()),
            });
        }
        let w = self.effective_weight(cmdp.discount);
        Ok(&cmdp.cost + &(&self.base * w))
    }
}

/// A feasible plan: the extracted policy, its occupancy measure, and the
/// model's view of its discounted return and (penalized) discounted cost.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub policy: Policy,
    pub occupancy: OccupancyMeasure,
    pub model_ret: f64,
    pub model_cost: f64,
}

/// Outcome of constrained planning. Infeasibility is an ordinary, expected
/// result under heavy penalties, not an error.
#[derive(Debug, Clone)]
pub enum PlanOutcome {
    Feasible(PlanResult),
    Infeasible,
}

impl PlanOutcome {
    pub fn feasible(&self) -> Option<&PlanResult> {
        match self {
            PlanOutcome::Feasible(r) => Some(r),
            PlanOutcome::Infeasible => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, PlanOutcome::Infeasible)
    }
}

enum Goal {
    MaxRewardUnderBudget,
    MinCost,
}

/// Flow-conservation equalities shared by every occupancy program.
fn flow_constraints(cmdp: &Cmdp) -> (Array2<f64>, Array1<f64>) {
    let ns = cmdp.n_states;
    let na = cmdp.n_actions;
    let n = ns * na;
    let g = cmdp.discount;
    let mut lhs = Array2::zeros((ns, n));
    let mut rhs = Array1::zeros(ns);
    for s in 0..ns {
        for sp in 0..ns {
            for ap in 0..na {
                let mut coeff = -g * cmdp.transition[(sp, ap, s)];
                if sp == s {
                    coeff += 1.0;
                }
                lhs[(s, sp * na + ap)] = coeff;
            }
        }
        rhs[s] = (1.0 - g) * cmdp.initial_dist[s];
    }
    (lhs, rhs)
}

fn solve_flow_lp(cmdp: &Cmdp, penalized: &Array2<f64>, goal: Goal) -> Result<PlanOutcome> {
    let ns = cmdp.n_states;
    let na = cmdp.n_actions;
    let n = ns * na;
    let scale = 1.0 / (1.0 - cmdp.discount);

    let mut objective = Array1::zeros(n);
    for s in 0..ns {
        for a in 0..na {
            objective[s * na + a] = match goal {
                Goal::MaxRewardUnderBudget => -scale * cmdp.reward[(s, a)],
                Goal::MinCost => scale * penalized[(s, a)],
            };
        }
    }

    let mut lp = LinearProgram::new(objective);
    let (eq_lhs, eq_rhs) = flow_constraints(cmdp);
    lp.eq_lhs = eq_lhs;
    lp.eq_rhs = eq_rhs;
    if matches!(goal, Goal::MaxRewardUnderBudget) {
        let mut row = Array2::zeros((1, n));
        for s in 0..ns {
            for a in 0..na {
                row[(0, s * na + a)] = scale * penalized[(s, a)];
            }
        }
        lp.ub_lhs = row;
        lp.ub_rhs = Array1::from_vec(vec![cmdp.cost_limit]);
    }

    let x = match lp::solve(&lp)? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => return Ok(PlanOutcome::Infeasible),
        LpOutcome::Unbounded => {
            return Err(Error::Numerical(
                "occupancy polytope cannot be unbounded".into(),
            ))
        }
    };

    let rho_raw = x
        .into_shape_with_order((ns, na))
        .expect("solution has n_states * n_actions entries");
    let occupancy = OccupancyMeasure::new(rho_raw)?;
    let policy = policy_of_occupancy(&occupancy);
    let model_ret = scale * occupancy.weigh(&cmdp.reward);
    let model_cost = scale * occupancy.weigh(penalized);
    Ok(PlanOutcome::Feasible(PlanResult {
        policy,
        occupancy,
        model_ret,
        model_cost,
    }))
}

/// Maximizes discounted return subject to the cost budget of `cmdp`.
pub fn solve_cmdp(cmdp: &Cmdp) -> Result<PlanOutcome> {
    let penalized = cmdp.cost.clone();
    solve_flow_lp(cmdp, &penalized, Goal::MaxRewardUnderBudget)
}

/// Maximizes discounted return subject to the budget on the penalized cost
/// `c + weight * base`. With a heavy penalty this may well be infeasible.
pub fn solve_conservative(cmdp: &Cmdp, weighting: &PenaltyWeighting) -> Result<PlanOutcome> {
    let penalized = weighting.penalized_cost(cmdp)?;
    solve_flow_lp(cmdp, &penalized, Goal::MaxRewardUnderBudget)
}

/// Safe fallback when the budgeted program is infeasible: minimize the
/// penalized cost outright, ignoring reward and budget. The occupancy
/// polytope is never empty, so this always returns a plan.
pub fn min_cost_fallback(cmdp: &Cmdp, weighting: &PenaltyWeighting) -> Result<PlanResult> {
    let penalized = weighting.penalized_cost(cmdp)?;
    match solve_flow_lp(cmdp, &penalized, Goal::MinCost)? {
        PlanOutcome::Feasible(r) => Ok(r),
        PlanOutcome::Infeasible => Err(Error::Numerical(
            "unconstrained occupancy program reported infeasible".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::evaluate_policy;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3};

    fn single_state_two_actions() -> Cmdp {
        let mut t = Array3::zeros((1, 2, 1));
        t[(0, 0, 0)] = 1.0;
        t[(0, 1, 0)] = 1.0;
        Cmdp::new(
            t,
            array![[1.0, 0.0]],
            array![[1.0, 0.0]],
            0.5,
            array![1.0],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn binding_budget_mixes_actions() {
        let m = single_state_two_actions();
        let plan = solve_cmdp(&m).unwrap();
        let r = plan.feasible().expect("feasible");
        assert_abs_diff_eq!(r.model_ret, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.model_cost, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.policy.probs()[(0, 0)], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.policy.probs()[(0, 1)], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn slack_budget_recovers_unconstrained_optimum() {
        for seed in 0..20 {
            let mut m = crate::testing::random_cmdp(5, 3, 0.9, seed);
            m.cost_limit = 1.0 / (1.0 - m.discount); // can never bind
            let plan = solve_cmdp(&m).unwrap();
            let r = plan.feasible().expect("feasible");
            let vi = crate::testing::value_iteration_return(&m, 1e-13);
            assert!(
                (r.model_ret - vi).abs() < 1e-6,
                "seed {seed}: lp {} vs value iteration {vi}",
                r.model_ret
            );
        }
    }

    #[test]
    fn impossible_budget_is_infeasible() {
        let mut m = crate::testing::random_cmdp(4, 2, 0.99, 5);
        m.cost = Array2::from_elem((4, 2), 1.0);
        m.cost_limit = 0.1; // discounted cost is 1/(1-gamma) = 100 under any policy
        assert!(solve_cmdp(&m).unwrap().is_infeasible());
    }

    #[test]
    fn zero_penalty_matches_plain_solve() {
        let m = crate::testing::random_cmdp(4, 3, 0.9, 11);
        let plain = solve_cmdp(&m).unwrap();
        let weighted = solve_conservative(&m, &PenaltyWeighting::none(4, 3)).unwrap();
        let a = plain.feasible().unwrap();
        let b = weighted.feasible().unwrap();
        assert_eq!(a.occupancy.rho(), b.occupancy.rho());
        assert_eq!(a.model_ret, b.model_ret);
    }

    #[test]
    fn plan_respects_budget_and_flow() {
        for seed in 0..15 {
            let m = crate::testing::random_cmdp(5, 3, 0.95, seed + 40);
            if let PlanOutcome::Feasible(r) = solve_cmdp(&m).unwrap() {
                assert!(r.model_cost <= m.cost_limit + 1e-6);
                assert!(r.occupancy.flow_residual(&m) <= 1e-6);
                assert_abs_diff_eq!(r.occupancy.rho().sum(), 1.0, epsilon = 1e-6);
                // The extracted policy reproduces the occupancy's value.
                let e = evaluate_policy(&m, &r.policy).unwrap();
                assert_abs_diff_eq!(e.ret, r.model_ret, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn heavier_penalty_never_helps() {
        let m = crate::testing::random_cmdp(5, 3, 0.9, 21);
        let u = Array2::from_elem((5, 3), 0.3);
        let mut last = f64::INFINITY;
        for kappa in [0.0, 0.1, 1.0, 10.0] {
            let w = PenaltyWeighting::adaptive(kappa, u.clone()).unwrap();
            match solve_conservative(&m, &w).unwrap() {
                PlanOutcome::Feasible(r) => {
                    assert!(r.model_ret <= last + 1e-9);
                    last = r.model_ret;
                }
                PlanOutcome::Infeasible => last = f64::NEG_INFINITY,
            }
        }
    }

    #[test]
    fn certified_weight_scales_with_discount() {
        let w = PenaltyWeighting::certified(100.0, Array2::zeros((2, 2))).unwrap();
        assert_abs_diff_eq!(w.effective_weight(0.99), 99.0, epsilon = 1e-12);
        let w = PenaltyWeighting::adaptive(0.25, Array2::zeros((2, 2))).unwrap();
        assert_abs_diff_eq!(w.effective_weight(0.99), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(
            PenaltyWeighting::none(2, 2).effective_weight(0.99),
            0.0
        );
    }

    #[test]
    fn fallback_concentrates_on_cheap_state() {
        // Three-state chain: states 0 and 1 cost 1 under every action; state
        // 2 has a free self-loop. The cheapest occupancy parks in state 2.
        let mut t = Array3::zeros((3, 2, 3));
        // action 0 advances, action 1 stays
        t[(0, 0, 1)] = 1.0;
        t[(0, 1, 0)] = 1.0;
        t[(1, 0, 2)] = 1.0;
        t[(1, 1, 1)] = 1.0;
        t[(2, 0, 2)] = 1.0;
        t[(2, 1, 2)] = 1.0;
        let cost = array![[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]];
        let m = Cmdp::new(
            t,
            Array2::zeros((3, 2)),
            cost,
            0.9,
            array![1.0, 0.0, 0.0],
            0.0,
        )
        .unwrap();
        let r = min_cost_fallback(&m, &PenaltyWeighting::none(3, 2)).unwrap();
        let exact = evaluate_policy(&m, &r.policy).unwrap();
        assert_abs_diff_eq!(r.model_cost, exact.cost, epsilon = 1e-6);
        // Mass in state 2 is everything not forced through states 0 and 1.
        let in_cheap: f64 = r.occupancy.rho().row(2).sum();
        assert!(in_cheap > 0.7, "cheap-state mass {in_cheap}");
        // Advancing beats staying: cost-to-go shrinks each step.
        assert!(exact.cost <= 0.1 * (1.0 + 0.9) / (1.0 - 0.9) + 1e-9);
    }

    #[test]
    fn exact_penalty_certifies_true_feasibility() {
        for seed in 0..20 {
            let (reference, approx) = crate::testing::random_cmdp_pair(5, 3, 0.9, seed + 500);
            let beta = 1.0 / (1.0 - reference.discount);
            // Penalty table: exact total variation between the kernels.
            let mut u = Array2::zeros((5, 3));
            for s in 0..5 {
                for a in 0..3 {
                    u[(s, a)] = crate::cmdp::tv_distance(
                        approx.transition.slice(ndarray::s![s, a, ..]),
                        reference.transition.slice(ndarray::s![s, a, ..]),
                    );
                }
            }
            let w = PenaltyWeighting::certified(beta, u).unwrap();
            // Pick a budget the conservative program can meet.
            let floor = min_cost_fallback(&approx, &w).unwrap().model_cost;
            let mut approx = approx;
            approx.cost_limit = floor * 1.05 + 0.01;
            let plan = solve_conservative(&approx, &w).unwrap();
            let r = plan.feasible().expect("budget chosen above the floor");
            let truth = evaluate_policy(&reference, &r.policy).unwrap();
            assert!(
                truth.cost <= approx.cost_limit + 1e-6,
                "seed {seed}: true cost {} over budget {}",
                truth.cost,
                approx.cost_limit
            );
        }
    }
}
