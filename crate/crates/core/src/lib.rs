//! Planning and learning primitives for budget-constrained sequential
//! decision problems, sized for a single desk machine.
//!
//! The crate has three layers:
//!
//! * problem structure: [`cmdp`] defines constrained MDPs, policies,
//!   occupancy measures, and exact evaluation; [`lp`] is the dense
//!   two-phase simplex solver everything tabular rests on.
//! * learning: [`tabular`] estimates transition tables from counts and
//!   prices their uncertainty; [`ensemble`] does the same for continuous
//!   systems with a bootstrap ensemble of linear-Gaussian regressors.
//! * acting: [`planner`] maximizes return over occupancy measures under a
//!   (possibly penalty-inflated) cost budget; [`ccem`] optimizes action
//!   sequences against a learned model under the same penalized budget;
//!   [`controller`] adapts the penalty weight from observed costs.
//!
//! [`envs`] provides the seeded benchmark environments and [`testing`]
//! the shared generators and oracles used across test suites.
//!
//! Everything is deterministic given explicit seeds: all randomness flows
//! through [`ChaCha8Rng`], re-exported at the root so downstream crates
//! use the identical stream implementation.

// Validation throughout uses `!(x > 0.0)` rather than `x <= 0.0` so that
// NaN fails the check instead of slipping past it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference constants in tests keep every digit produced by the oracle
// computation, beyond what f64 can represent.
#![allow(clippy::excessive_precision)]

pub mod ccem;
pub mod cmdp;
pub mod controller;
pub mod ensemble;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod planner;
pub mod tabular;
pub mod testing;

pub use cmdp::{
    evaluate_policy, occupancy_of_policy, policy_of_occupancy, simulation_gap_check, tv_distance,
    Cmdp, EvalResult, GapCheck, OccupancyMeasure, Policy,
};
pub use controller::{exponential_search_init, ControllerState, SearchOutcome};
pub use error::{Error, Result};
pub use planner::{
    min_cost_fallback, solve_cmdp, solve_conservative, PenaltyMode, PenaltyWeighting, PlanOutcome,
    PlanResult,
};
pub use rand_chacha::ChaCha8Rng;
pub use tabular::{CountTable, PenaltyKind, PenaltyTable};
