//! Feedback control of the adaptive penalty weight.
//!
//! The weight kappa multiplies the model-uncertainty penalty inside the
//! planner. A proportional update nudges it after every episode: observed
//! cost above the budget pushes kappa up, cost below pulls it down, and a
//! floor at zero keeps the penalty a penalty. A one-shot exponential search
//! picks the starting weight by halving from a deliberately oversized guess
//! until the planner first reports a feasible program.

use crate::error::{Error, Result};

/// Proportional controller state for the penalty weight.
#[derive(Debug, Clone)]
pub struct ControllerState {
    kappa: f64,
    alpha: f64,
    history: Vec<(f64, f64)>,
}

impl ControllerState {
    /// `kappa0` is the initial weight, `alpha` the update gain.
    pub fn new(kappa0: f64, alpha: f64) -> Result<Self> {
        if !(kappa0 >= 0.0) || !kappa0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "initial weight must be nonnegative and finite, got {kappa0}"
            )));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gain must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self {
            kappa: kappa0,
            alpha,
            history: Vec::new(),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `(observed_cost, kappa_after_update)` per update, oldest first.
    pub fn history(&self) -> &[(f64, f64)] {
        &self.history
    }

    /// Applies `kappa <- max(0, kappa + alpha * (observed_cost - limit))`
    /// and returns the new weight.
    pub fn update(&mut self, observed_cost: f64, limit: f64) -> Result<f64> {
        if !observed_cost.is_finite() || !limit.is_finite() {
            return Err(Error::NonFinite(format!(
                "controller update with cost {observed_cost}, limit {limit}"
            )));
        }
        self.kappa = (self.kappa + self.alpha * (observed_cost - limit)).max(0.0);
        self.history.push((observed_cost, self.kappa));
        Ok(self.kappa)
    }

    /// Forces the weight to a specific value, e.g. after a feasibility
    /// search has picked a starting point.
    pub fn set_kappa(&mut self, kappa: f64) -> Result<()> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weight must be nonnegative and finite, got {kappa}"
            )));
        }
        self.kappa = kappa;
        Ok(())
    }
}

/// Result of the initial feasibility search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchOutcome {
    /// First weight at which the probe reported feasible.
    Feasible(f64),
    /// No probe succeeded before the weight fell below the floor; the
    /// caller should plan for minimum cost instead.
    Fallback,
}

/// Halves the weight from `start` until `is_feasible` first returns true,
/// stopping once the next candidate would drop below `floor`.
pub fn exponential_search_init<F>(
    mut is_feasible: F,
    start: f64,
    floor: f64,
) -> Result<SearchOutcome>
where
    F: FnMut(f64) -> bool,
{
    if !(start > 0.0) || !start.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "search start must be positive and finite, got {start}"
        )));
    }
    if !(floor > 0.0) || floor > start {
        return Err(Error::InvalidArgument(format!(
            "search floor must satisfy 0 < floor <= start, got {floor}"
        )));
    }
    let mut kappa = start;
    while kappa >= floor {
        if is_feasible(kappa) {
            return Ok(SearchOutcome::Feasible(kappa));
        }
        kappa /= 2.0;
    }
    Ok(SearchOutcome::Fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn update_is_the_textbook_proportional_step() {
        let mut c = ControllerState::new(1.0, 0.1).unwrap();
        let k = c.update(0.2, 0.1).unwrap();
        // 1.0 + 0.1 * (0.2 - 0.1), no rounding surprises
        assert_abs_diff_eq!(k, 1.01, epsilon = 0.0);
        assert_eq!(c.history(), &[(0.2, 1.01)]);
    }

    #[test]
    fn weight_clamps_at_zero() {
        let mut c = ControllerState::new(0.05, 0.1).unwrap();
        let k = c.update(0.0, 10.0).unwrap();
        assert_eq!(k, 0.0);
        // Stays pinned while cost remains under the limit.
        assert_eq!(c.update(0.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn on_target_cost_is_a_fixed_point() {
        let mut c = ControllerState::new(0.7, 0.1).unwrap();
        for _ in 0..50 {
            assert_eq!(c.update(0.1, 0.1).unwrap(), 0.7);
        }
    }

    #[test]
    fn constant_overshoot_ramps_linearly() {
        let mut c = ControllerState::new(0.0, 0.1).unwrap();
        for i in 1..=20 {
            let k = c.update(1.1, 0.1).unwrap();
            assert_abs_diff_eq!(k, 0.1 * i as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let mut c = ControllerState::new(1.0, 0.1).unwrap();
        assert!(c.update(f64::NAN, 0.1).is_err());
        assert!(c.update(0.2, f64::INFINITY).is_err());
        assert!(ControllerState::new(f64::NAN, 0.1).is_err());
        assert!(ControllerState::new(-1.0, 0.1).is_err());
        assert!(ControllerState::new(1.0, 0.0).is_err());
    }

    #[test]
    fn search_stops_at_first_feasible_weight() {
        let mut probed = Vec::new();
        let got = exponential_search_init(
            |k| {
                probed.push(k);
                k <= 2.0
            },
            10.0,
            1e-4,
        )
        .unwrap();
        assert_eq!(got, SearchOutcome::Feasible(1.25));
        assert_eq!(probed, vec![10.0, 5.0, 2.5, 1.25]);
    }

    #[test]
    fn search_exhausts_to_fallback_after_seventeen_probes() {
        let mut probes = 0u32;
        let got = exponential_search_init(
            |_| {
                probes += 1;
                false
            },
            10.0,
            1e-4,
        )
        .unwrap();
        assert_eq!(got, SearchOutcome::Fallback);
        // 10 / 2^16 = 1.52587890625e-4 is the last probe above the floor.
        assert_eq!(probes, 17);
    }

    #[test]
    fn immediate_feasibility_keeps_the_start() {
        let got = exponential_search_init(|_| true, 10.0, 1e-4).unwrap();
        assert_eq!(got, SearchOutcome::Feasible(10.0));
    }

    #[test]
    fn search_rejects_bad_ranges() {
        assert!(exponential_search_init(|_| true, 0.0, 1e-4).is_err());
        assert!(exponential_search_init(|_| true, 1.0, 2.0).is_err());
        assert!(exponential_search_init(|_| true, 1.0, 0.0).is_err());
    }

    #[test]
    fn replay_of_a_recorded_cost_trace_is_bit_exact() {
        let costs = [0.4, 0.12, 0.08, 0.11, 0.1, 0.09, 0.15];
        let run = |_: ()| {
            let mut c = ControllerState::new(0.5, 0.1).unwrap();
            costs.iter().map(|&j| c.update(j, 0.1).unwrap()).collect::<Vec<_>>()
        };
        let first = run(());
        let second = run(());
        assert_eq!(first, second);
        for (a, b) in first.iter().zip(second.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    proptest! {
        #[test]
        fn update_moves_in_the_direction_of_the_error(
            kappa0 in 0.0..10.0f64,
            alpha in 1e-3..1.0f64,
            cost in 0.0..5.0f64,
            limit in 0.0..5.0f64,
        ) {
            let mut c = ControllerState::new(kappa0, alpha).unwrap();
            let k = c.update(cost, limit).unwrap();
            prop_assert!(k >= 0.0);
            if cost > limit {
                prop_assert!(k > kappa0 - 1e-15);
            } else if cost < limit && kappa0 > 0.0 {
                prop_assert!(k < kappa0 + 1e-15);
            }
        }

        #[test]
        fn search_result_is_start_over_a_power_of_two(pow in 0u32..16) {
            let threshold = 10.0 / 2f64.powi(pow as i32);
            let got = exponential_search_init(|k| k <= threshold, 10.0, 1e-4).unwrap();
            prop_assert_eq!(got, SearchOutcome::Feasible(threshold));
        }
    }
}
