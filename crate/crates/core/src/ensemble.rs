//! Bootstrap ensemble of linear-Gaussian dynamics models and a companion
//! cost regressor for continuous state-action spaces.
//!
//! Each ensemble member is a ridge regression from features (s, a, 1) to
//! the state change s' - s, with a homoscedastic per-dimension residual
//! variance. Members are fit on independent bootstrap resamples, so their
//! predictions agree where data is dense and fan out where it is not; that
//! disagreement is the uncertainty signal the planner penalizes.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Variance floor applied to every fitted residual variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// One logged environment transition.
#[derive(Debug, Clone)]
pub struct Sample {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub cost: f64,
}

/// Knobs for [`fit_with`]; [`fit`] uses the defaults.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub members: usize,
    pub ridge: f64,
    /// When false every member sees the full buffer, which collapses the
    /// ensemble to identical copies. Useful as a control in tests.
    pub bootstrap: bool,
    /// Fit the cost head on labels mapped to -1/+1 and treat its output as
    /// a thresholdable score rather than a cost estimate.
    pub binary_cost: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            members: 5,
            ridge: 1e-6,
            bootstrap: true,
            binary_cost: false,
        }
    }
}

/// How to turn ensemble spread into a scalar uncertainty u(s, a).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncertaintyEstimator {
    /// Largest member residual-standard-deviation norm. Constant in (s, a)
    /// for this regressor family.
    MaxStd,
    /// Norm of the per-dimension variance of the member mean predictions.
    /// Grows away from the training data, which is what the penalty needs.
    #[default]
    MeanDisagreement,
}

/// Ensemble of linear-Gaussian next-state models.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    state_dim: usize,
    action_dim: usize,
    /// Per member: (feature dim, state dim) weights mapping (s, a, 1) to
    /// the mean state change.
    weights: Vec<Array2<f64>>,
    /// Per member: per-dimension residual variance, floored.
    variances: Vec<Array1<f64>>,
    /// Square roots of `variances`, cached for sampling.
    stds: Vec<Array1<f64>>,
}

/// Single regressor over (s, a, 1) predicting cost (or a class score).
#[derive(Debug, Clone)]
pub struct CostModel {
    state_dim: usize,
    action_dim: usize,
    weights: Array1<f64>,
    variance: f64,
    binary: bool,
}

fn check_buffer(buffer: &[Sample]) -> Result<(usize, usize)> {
    let first = buffer.first().ok_or(Error::InsufficientData {
        have: 0,
        need: 2,
    })?;
    let sd = first.state.len();
    let ad = first.action.len();
    if sd == 0 {
        return Err(Error::InvalidArgument("empty state vectors".into()));
    }
    for (i, s) in buffer.iter().enumerate() {
        if s.state.len() != sd || s.next_state.len() != sd || s.action.len() != ad {
            return Err(Error::ShapeMismatch {
                expected: format!("state dim {sd}, action dim {ad}"),
                got: format!(
                    "sample {i}: state {}, next {}, action {}",
                    s.state.len(),
                    s.next_state.len(),
                    s.action.len()
                ),
            });
        }
        let finite = s.state.iter().chain(&s.action).chain(&s.next_state).all(|v| v.is_finite())
            && s.cost.is_finite();
        if !finite {
            return Err(Error::NonFinite(format!("sample {i} in training buffer")));
        }
    }
    Ok((sd, ad))
}

fn features_into(state: &[f64], action: &[f64], row: &mut [f64]) {
    let sd = state.len();
    row[..sd].copy_from_slice(state);
    row[sd..sd + action.len()].copy_from_slice(action);
    row[sd + action.len()] = 1.0;
}

/// Ridge solution of X W = Y restricted to the rows in `idx`, plus the
/// per-column mean squared residual over those rows.
fn ridge_fit(
    x: &Array2<f64>,
    y: &Array2<f64>,
    idx: &[usize],
    ridge: f64,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let feat = x.ncols();
    let out = y.ncols();
    let mut gram = Array2::zeros((feat, feat));
    let mut xty = Array2::zeros((feat, out));
    for &i in idx {
        let xi = x.row(i);
        let yi = y.row(i);
        for p in 0..feat {
            let xp = xi[p];
            for q in 0..feat {
                gram[(p, q)] += xp * xi[q];
            }
            for d in 0..out {
                xty[(p, d)] += xp * yi[d];
            }
        }
    }
    for p in 0..feat {
        gram[(p, p)] += ridge;
    }
    let w = linalg::solve_multi(&gram, &xty)?;
    let mut mse = Array1::zeros(out);
    for &i in idx {
        let xi = x.row(i);
        for d in 0..out {
            let mut pred = 0.0;
            for p in 0..feat {
                pred += xi[p] * w[(p, d)];
            }
            let r = y[(i, d)] - pred;
            mse[d] += r * r;
        }
    }
    mse.mapv_inplace(|v| v / idx.len() as f64);
    Ok((w, mse))
}

/// Fits the dynamics ensemble and the cost model with default options.
pub fn fit(buffer: &[Sample], members: usize, seed: u64) -> Result<(EnsembleModel, CostModel)> {
    let opts = FitOptions {
        members,
        ..FitOptions::default()
    };
    fit_with(buffer, &opts, seed)
}

/// Fits the dynamics ensemble on bootstrap resamples and the cost model on
/// the full buffer.
pub fn fit_with(
    buffer: &[Sample],
    opts: &FitOptions,
    seed: u64,
) -> Result<(EnsembleModel, CostModel)> {
    if opts.members < 2 {
        return Err(Error::InvalidArgument(format!(
            "ensemble needs at least 2 members, got {}",
            opts.members
        )));
    }
    if !(opts.ridge > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge coefficient must be positive, got {}",
            opts.ridge
        )));
    }
    let (sd, ad) = check_buffer(buffer)?;
    let n = buffer.len();
    let feat = sd + ad + 1;
    if n < 2 * feat {
        return Err(Error::InsufficientData {
            have: n,
            need: 2 * feat,
        });
    }

    let mut x = Array2::zeros((n, feat));
    let mut delta = Array2::zeros((n, sd));
    let mut cost = Array2::zeros((n, 1));
    for (i, s) in buffer.iter().enumerate() {
        features_into(&s.state, &s.action, x.row_mut(i).as_slice_mut().unwrap());
        for d in 0..sd {
            delta[(i, d)] = s.next_state[d] - s.state[d];
        }
        cost[(i, 0)] = if opts.binary_cost {
            if s.cost > 0.5 {
                1.0
            } else {
                -1.0
            }
        } else {
            s.cost
        };
    }

    // Resample indices are drawn for every member up front so the fit order
    // cannot disturb the stream.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full: Vec<usize> = (0..n).collect();
    let resamples: Vec<Vec<usize>> = (0..opts.members)
        .map(|_| {
            if opts.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                full.clone()
            }
        })
        .collect();

    let mut weights = Vec::with_capacity(opts.members);
    let mut variances = Vec::with_capacity(opts.members);
    let mut stds = Vec::with_capacity(opts.members);
    for idx in &resamples {
        let (w, mse) = ridge_fit(&x, &delta, idx, opts.ridge)?;
        let var = mse.mapv(|v| v.max(VARIANCE_FLOOR));
        stds.push(var.mapv(f64::sqrt));
        variances.push(var);
        weights.push(w);
    }

    let (cw, cmse) = ridge_fit(&x, &cost, &full, opts.ridge)?;
    let cost_model = CostModel {
        state_dim: sd,
        action_dim: ad,
        weights: cw.column(0).to_owned(),
        variance: cmse[0].max(VARIANCE_FLOOR),
        binary: opts.binary_cost,
    };
    Ok((
        EnsembleModel {
            state_dim: sd,
            action_dim: ad,
            weights,
            variances,
            stds,
        },
        cost_model,
    ))
}

impl EnsembleModel {
    pub fn members(&self) -> usize {
        self.weights.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    #[inline]
    fn delta_dim(&self, member: usize, state: &[f64], action: &[f64], d: usize) -> f64 {
        let w = &self.weights[member];
        let mut acc = w[(self.state_dim + self.action_dim, d)];
        for (i, &s) in state.iter().enumerate() {
            acc += s * w[(i, d)];
        }
        for (j, &a) in action.iter().enumerate() {
            acc += a * w[(self.state_dim + j, d)];
        }
        acc
    }

    /// Mean state change and residual variance for one member.
    pub fn predict(&self, member: usize, state: &[f64], action: &[f64]) -> (Array1<f64>, ArrayView1<'_, f64>) {
        let mut delta = Array1::zeros(self.state_dim);
        for d in 0..self.state_dim {
            delta[d] = self.delta_dim(member, state, action, d);
        }
        (delta, self.variances[member].view())
    }

    /// Writes the member's mean next state into `next` without allocating.
    #[inline]
    pub fn predict_next_into(&self, member: usize, state: &[f64], action: &[f64], next: &mut [f64]) {
        for d in 0..self.state_dim {
            next[d] = state[d] + self.delta_dim(member, state, action, d);
        }
    }

    /// Draws a next state from the member's Gaussian.
    pub fn sample_next_into(
        &self,
        member: usize,
        state: &[f64],
        action: &[f64],
        rng: &mut ChaCha8Rng,
        next: &mut [f64],
    ) {
        let std = &self.stds[member];
        for d in 0..self.state_dim {
            let z: f64 = StandardNormal.sample(rng);
            next[d] = state[d] + self.delta_dim(member, state, action, d) + std[d] * z;
        }
    }

    pub fn member_variance(&self, member: usize) -> ArrayView1<'_, f64> {
        self.variances[member].view()
    }

    /// Scalar uncertainty at (s, a) under the chosen estimator.
    pub fn uncertainty(&self, state: &[f64], action: &[f64], estimator: UncertaintyEstimator) -> f64 {
        match estimator {
            UncertaintyEstimator::MaxStd => self
                .stds
                .iter()
                .map(|s| s.dot(s).sqrt())
                .fold(0.0, f64::max),
            UncertaintyEstimator::MeanDisagreement => {
                let k = self.members() as f64;
                let mut sq_norm = 0.0;
                for d in 0..self.state_dim {
                    let mut sum = 0.0;
                    let mut sumsq = 0.0;
                    for m in 0..self.members() {
                        let v = self.delta_dim(m, state, action, d);
                        sum += v;
                        sumsq += v * v;
                    }
                    let mean = sum / k;
                    let var = (sumsq / k - mean * mean).max(0.0);
                    sq_norm += var * var;
                }
                sq_norm.sqrt()
            }
        }
    }
}

impl CostModel {
    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Raw regressor output: cost estimate in continuous mode, class score
    /// in binary mode.
    #[inline]
    pub fn predict(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut acc = self.weights[self.state_dim + self.action_dim];
        for (i, &s) in state.iter().enumerate() {
            acc += s * self.weights[i];
        }
        for (j, &a) in action.iter().enumerate() {
            acc += a * self.weights[self.state_dim + j];
        }
        acc
    }

    /// Pessimistic cost: `c_hat + kappa * u` in continuous mode, the
    /// indicator `score + u > 0` in binary mode (kappa ignored there).
    pub fn conservative_cost(&self, state: &[f64], action: &[f64], u: f64, kappa: f64) -> f64 {
        let raw = self.predict(state, action);
        if self.binary {
            if raw + u > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            raw + kappa * u
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn linear_buffer(
        n: usize,
        noise: f64,
        seed: u64,
        coeff_s: f64,
        coeff_a: f64,
        intercept: f64,
    ) -> Vec<Sample> {
        let mut rng = crate::testing::rng(seed);
        (0..n)
            .map(|_| {
                let s = rng.random_range(-1.0..1.0);
                let a = rng.random_range(-1.0..1.0);
                let eps: f64 = if noise > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise * z
                } else {
                    0.0
                };
                let ds = coeff_s * s + coeff_a * a + intercept + eps;
                Sample {
                    state: vec![s],
                    action: vec![a],
                    next_state: vec![s + ds],
                    cost: s.abs(),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_linear_data_is_recovered_exactly() {
        let buffer = linear_buffer(100, 0.0, 1, 2.0, 1.0, 0.0);
        let (model, _) = fit(&buffer, 3, 7).unwrap();
        for m in 0..3 {
            let (delta, var) = model.predict(m, &[1.0], &[1.0]);
            assert_abs_diff_eq!(delta[0], 3.0, epsilon = 1e-6);
            // Residuals vanish, so the stored variance sits on the floor.
            assert_abs_diff_eq!(var[0], VARIANCE_FLOOR);
        }
    }

    #[test]
    fn disabling_bootstrap_collapses_the_ensemble() {
        let buffer = linear_buffer(60, 0.05, 2, 1.5, -0.5, 0.2);
        let opts = FitOptions {
            members: 4,
            bootstrap: false,
            ..FitOptions::default()
        };
        let (model, _) = fit_with(&buffer, &opts, 3).unwrap();
        for m in 1..4 {
            assert_eq!(model.weights[0], model.weights[m]);
        }
        assert_eq!(
            model.uncertainty(&[0.3], &[0.1], UncertaintyEstimator::MeanDisagreement),
            0.0
        );
    }

    #[test]
    fn mean_coefficients_track_the_least_squares_oracle() {
        let buffer = linear_buffer(10_000, 0.1, 5, 0.8, -0.3, 0.05);
        let (model, _) = fit(&buffer, 5, 11).unwrap();

        // Closed-form ordinary least squares on the same buffer, written
        // out with Cramer's rule so it shares nothing with the fit path.
        let n = buffer.len() as f64;
        let mut m = [[0.0f64; 3]; 3];
        let mut v = [0.0f64; 3];
        for s in &buffer {
            let phi = [s.state[0], s.action[0], 1.0];
            let y = s.next_state[0] - s.state[0];
            for p in 0..3 {
                for q in 0..3 {
                    m[p][q] += phi[p] * phi[q];
                }
                v[p] += phi[p] * y;
            }
        }
        let det = |m: &[[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d0 = det(&m);
        let mut ols = [0.0f64; 3];
        for col in 0..3 {
            let mut mc = m;
            for row in 0..3 {
                mc[row][col] = v[row];
            }
            ols[col] = det(&mc) / d0;
        }
        // Standard error of each coefficient: sigma^2 on the diagonal of
        // the inverse Gram matrix, estimated from the noise level used to
        // generate the data.
        let sigma2 = 0.1f64 * 0.1;
        for (p, &ols_p) in ols.iter().enumerate() {
            // Diagonal of the inverse via Cramer again.
            let minor = match p {
                0 => m[1][1] * m[2][2] - m[1][2] * m[2][1],
                1 => m[0][0] * m[2][2] - m[0][2] * m[2][0],
                _ => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            };
            let se = (sigma2 * minor / d0).sqrt();
            let mean_w: f64 = (0..5).map(|k| model.weights[k][(p, 0)]).sum::<f64>() / 5.0;
            assert!(
                (mean_w - ols_p).abs() <= 3.0 * se.max(1e-6),
                "coefficient {p}: ensemble mean {mean_w}, least squares {ols_p} (se {se}, n {n})"
            );
        }
    }

    #[test]
    fn disagreement_of_two_known_members_is_the_two_point_variance() {
        // Members predicting constant deltas 0 and 2 in one dimension:
        // population variance ((0-1)^2 + (2-1)^2) / 2 = 1.
        let w0 = array![[0.0], [0.0], [0.0]];
        let w1 = array![[0.0], [0.0], [2.0]];
        let model = EnsembleModel {
            state_dim: 1,
            action_dim: 1,
            weights: vec![w0, w1],
            variances: vec![array![1e-8], array![1e-8]],
            stds: vec![array![1e-4], array![1e-4]],
        };
        let u = model.uncertainty(&[0.0], &[0.0], UncertaintyEstimator::MeanDisagreement);
        assert_abs_diff_eq!(u, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn max_std_is_the_largest_member_norm() {
        let model = EnsembleModel {
            state_dim: 2,
            action_dim: 1,
            weights: vec![Array2::zeros((4, 2)), Array2::zeros((4, 2))],
            variances: vec![array![0.09, 0.16], array![1.0, 0.0]],
            stds: vec![array![0.3, 0.4], array![1.0, 0.0]],
        };
        let u = model.uncertainty(&[0.0, 0.0], &[0.0], UncertaintyEstimator::MaxStd);
        assert_abs_diff_eq!(u, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disagreement_grows_off_the_training_data() {
        let mut hits = 0;
        for seed in 0..50 {
            let mut rng = crate::testing::rng(1000 + seed);
            let buffer: Vec<Sample> = (0..200)
                .map(|_| {
                    let s = rng.random_range(0.0..1.0);
                    let a = rng.random_range(-1.0..1.0);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let ds = 0.5 * s + 0.3 * a + 0.05 * z;
                    Sample {
                        state: vec![s],
                        action: vec![a],
                        next_state: vec![s + ds],
                        cost: 0.0,
                    }
                })
                .collect();
            let (model, _) = fit(&buffer, 5, 2000 + seed).unwrap();
            let far = model.uncertainty(&[10.0], &[0.0], UncertaintyEstimator::MeanDisagreement);
            let near = model.uncertainty(&[0.5], &[0.0], UncertaintyEstimator::MeanDisagreement);
            if far > near {
                hits += 1;
            }
        }
        assert!(hits >= 45, "extrapolation beat interpolation in only {hits}/50 seeds");
    }

    #[test]
    fn more_data_means_less_disagreement() {
        let mut small_total = 0.0;
        let mut large_total = 0.0;
        for seed in 0..20 {
            let small = linear_buffer(30, 0.1, 300 + seed, 1.0, 0.5, 0.0);
            let large = linear_buffer(3000, 0.1, 300 + seed, 1.0, 0.5, 0.0);
            let (ms, _) = fit(&small, 5, 400 + seed).unwrap();
            let (ml, _) = fit(&large, 5, 400 + seed).unwrap();
            small_total += ms.uncertainty(&[0.2], &[0.1], UncertaintyEstimator::MeanDisagreement);
            large_total += ml.uncertainty(&[0.2], &[0.1], UncertaintyEstimator::MeanDisagreement);
        }
        assert!(
            large_total < small_total,
            "disagreement did not shrink: {small_total} -> {large_total}"
        );
    }

    #[test]
    fn refit_with_the_same_seed_is_bit_identical() {
        let buffer = linear_buffer(80, 0.1, 17, 1.0, 1.0, 0.0);
        let (a, ca) = fit(&buffer, 5, 99).unwrap();
        let (b, cb) = fit(&buffer, 5, 99).unwrap();
        for k in 0..5 {
            for (x, y) in a.weights[k].iter().zip(b.weights[k].iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (x, y) in ca.weights.iter().zip(cb.weights.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn full_buffer_fit_is_permutation_invariant() {
        let buffer = linear_buffer(60, 0.1, 23, 1.0, -1.0, 0.1);
        let mut reversed = buffer.clone();
        reversed.reverse();
        let opts = FitOptions {
            members: 2,
            bootstrap: false,
            ..FitOptions::default()
        };
        let (a, _) = fit_with(&buffer, &opts, 0).unwrap();
        let (b, _) = fit_with(&reversed, &opts, 0).unwrap();
        for (x, y) in a.weights[0].iter().zip(b.weights[0].iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn sampled_rollouts_are_seeded_and_calibrated() {
        let buffer = linear_buffer(200, 0.2, 31, 1.0, 0.0, 0.0);
        let (model, _) = fit(&buffer, 2, 5).unwrap();
        let draw = |seed: u64| {
            let mut rng = crate::testing::rng(seed);
            let mut out = [0.0];
            model.sample_next_into(0, &[0.5], &[0.0], &mut rng, &mut out);
            out[0]
        };
        assert_eq!(draw(3).to_bits(), draw(3).to_bits());
        assert_ne!(draw(3).to_bits(), draw(4).to_bits());

        // Empirical mean of many draws approaches the mean prediction.
        let mut rng = crate::testing::rng(77);
        let mut out = [0.0];
        let mut acc = 0.0;
        let n = 20_000;
        for _ in 0..n {
            model.sample_next_into(0, &[0.5], &[0.0], &mut rng, &mut out);
            acc += out[0];
        }
        let (delta, var) = model.predict(0, &[0.5], &[0.0]);
        let se = (var[0] / n as f64).sqrt();
        assert!(
            (acc / n as f64 - (0.5 + delta[0])).abs() < 4.0 * se,
            "sample mean drifted from the model mean"
        );
    }

    #[test]
    fn cost_model_recovers_a_linear_cost() {
        let mut rng = crate::testing::rng(41);
        let buffer: Vec<Sample> = (0..100)
            .map(|_| {
                let s = rng.random_range(-1.0..1.0);
                let a = rng.random_range(-1.0..1.0);
                Sample {
                    state: vec![s],
                    action: vec![a],
                    next_state: vec![s],
                    cost: 0.5 * s + 0.2 * a + 0.1,
                }
            })
            .collect();
        let (_, cost) = fit(&buffer, 2, 0).unwrap();
        assert_abs_diff_eq!(cost.predict(&[1.0], &[1.0]), 0.8, epsilon = 1e-5);
        assert!(!cost.is_binary());
    }

    #[test]
    fn conservative_cost_modes() {
        let continuous = CostModel {
            state_dim: 1,
            action_dim: 1,
            weights: array![0.0, 0.0, 0.4],
            variance: 1e-8,
            binary: false,
        };
        assert_abs_diff_eq!(continuous.conservative_cost(&[0.0], &[0.0], 0.3, 2.0), 1.0);
        assert_abs_diff_eq!(
            continuous.conservative_cost(&[0.0], &[0.0], 0.9, 0.0),
            0.4,
            epsilon = 1e-15
        );

        let binary = CostModel {
            state_dim: 1,
            action_dim: 1,
            weights: array![0.0, 0.0, -0.5],
            variance: 1e-8,
            binary: true,
        };
        assert_eq!(binary.conservative_cost(&[0.0], &[0.0], 0.2, 5.0), 0.0);
        assert_eq!(binary.conservative_cost(&[0.0], &[0.0], 0.6, 0.0), 1.0);
    }

    #[test]
    fn binary_fit_learns_a_signed_score() {
        let mut rng = crate::testing::rng(53);
        let buffer: Vec<Sample> = (0..200)
            .map(|_| {
                let s = rng.random_range(-1.0..1.0f64);
                Sample {
                    state: vec![s],
                    action: vec![0.0],
                    next_state: vec![s],
                    cost: if s > 0.0 { 1.0 } else { 0.0 },
                }
            })
            .collect();
        let opts = FitOptions {
            members: 2,
            binary_cost: true,
            ..FitOptions::default()
        };
        let (_, cost) = fit_with(&buffer, &opts, 9).unwrap();
        assert!(cost.is_binary());
        assert!(cost.predict(&[0.9], &[0.0]) > 0.0);
        assert!(cost.predict(&[-0.9], &[0.0]) < 0.0);
    }

    #[test]
    fn small_buffers_are_rejected() {
        let buffer = linear_buffer(5, 0.0, 1, 1.0, 1.0, 0.0);
        match fit(&buffer, 3, 0) {
            Err(Error::InsufficientData { have: 5, need: 6 }) => {}
            other => panic!("expected insufficient data, got {other:?}"),
        }
        assert!(fit(&[], 3, 0).is_err());
    }
}
