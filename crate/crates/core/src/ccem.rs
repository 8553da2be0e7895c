//! Constrained cross-entropy trajectory optimization over a learned model.
//!
//! Each planning call samples action sequences from a per-timestep diagonal
//! Gaussian, rolls them through an ensemble dynamics model, scores return
//! and a penalized cost, keeps the elite sequences, and refits the Gaussian
//! to them. Feasible sequences (penalized cost within the budget) compete on
//! return; when too few are feasible the population competes on cost
//! instead, which steers the distribution back toward the constraint set.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Smallest variance the sampling distribution is allowed to reach.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// A rollout model the planner can step one action at a time.
///
/// Implementations must be deterministic: the planner's own seed covers all
/// sampling, and particle diversity comes from the ensemble members.
pub trait Dynamics: Sync {
    fn members(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Writes the member's next state into `next` and returns the reward
    /// for taking `action` in `state`.
    fn step(&self, member: usize, state: &[f64], action: &[f64], next: &mut [f64]) -> f64;
    /// Model uncertainty at (state, action), priced into the planning cost.
    fn uncertainty(&self, state: &[f64], action: &[f64]) -> f64;
}

/// A per-step cost estimate over (state, action).
pub trait CostEstimator: Sync {
    fn cost(&self, state: &[f64], action: &[f64]) -> f64;
}

/// Planner hyperparameters.
#[derive(Debug, Clone)]
pub struct CcemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    pub horizon: usize,
    pub particles: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Starting mean per (timestep, action dim).
    pub init_mean: Array2<f64>,
    /// Starting variance per (timestep, action dim).
    pub init_var: Array2<f64>,
    pub discount: f64,
    pub cost_discount: f64,
    /// Whether callers should seed `init_mean` from the previous plan
    /// shifted one step; the planner itself only stores the flag.
    pub warm_start: bool,
}

impl CcemConfig {
    /// Defaults sized for a desk-scale continuous task: N=500, E=50, I=5,
    /// P=5 particles, discounts 0.99. The initial Gaussian is centered in
    /// the action box with standard deviation a quarter of its width.
    pub fn new(horizon: usize, action_low: Vec<f64>, action_high: Vec<f64>) -> Result<Self> {
        let action_dim = action_low.len();
        if action_dim == 0 || action_high.len() != action_dim {
            return Err(Error::InvalidArgument(
                "action bounds must be nonempty and equal length".into(),
            ));
        }
        let mut init_mean = Array2::zeros((horizon, action_dim));
        let mut init_var = Array2::zeros((horizon, action_dim));
        for t in 0..horizon {
            for d in 0..action_dim {
                let (lo, hi) = (action_low[d], action_high[d]);
                init_mean[(t, d)] = 0.5 * (lo + hi);
                let sd = (hi - lo) / 4.0;
                init_var[(t, d)] = sd * sd;
            }
        }
        let cfg = Self {
            population: 500,
            elites: 50,
            iterations: 5,
            horizon,
            particles: 5,
            action_dim,
            action_low,
            action_high,
            init_mean,
            init_var,
            discount: 0.99,
            cost_discount: 0.99,
            warm_start: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elites < 2 || self.elites > self.population {
            return Err(Error::InvalidArgument(format!(
                "need 2 <= elites <= population, got {} of {}",
                self.elites, self.population
            )));
        }
        if self.iterations == 0 || self.horizon == 0 || self.particles == 0 {
            return Err(Error::InvalidArgument(
                "iterations, horizon, and particles must be at least 1".into(),
            ));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::InvalidArgument(
                "action bounds must match the action dimension".into(),
            ));
        }
        for d in 0..self.action_dim {
            if !(self.action_low[d] < self.action_high[d]) {
                return Err(Error::InvalidArgument(format!(
                    "action bound {d} is empty: [{}, {}]",
                    self.action_low[d], self.action_high[d]
                )));
            }
        }
        let shape = (self.horizon, self.action_dim);
        if self.init_mean.dim() != shape || self.init_var.dim() != shape {
            return Err(Error::ShapeMismatch {
                expected: format!("initial mean/variance [{}, {}]", shape.0, shape.1),
                got: format!("{:?} / {:?}", self.init_mean.dim(), self.init_var.dim()),
            });
        }
        if self.init_var.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "initial variance must be positive and finite".into(),
            ));
        }
        for g in [self.discount, self.cost_discount] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "discounts must lie in (0, 1], got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Diagonal Gaussian over action sequences, one (mean, variance) pair per
/// timestep and action dimension.
#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    pub mean: Array2<f64>,
    pub variance: Array2<f64>,
}

impl SamplingDistribution {
    pub fn new(mean: Array2<f64>, variance: Array2<f64>) -> Result<Self> {
        if mean.dim() != variance.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", mean.dim()),
                got: format!("{:?}", variance.dim()),
            });
        }
        let mut variance = variance;
        variance.mapv_inplace(|v| v.max(VARIANCE_FLOOR));
        Ok(Self { mean, variance })
    }
}

/// Scores for one sampled action sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceEval {
    pub ret: f64,
    pub pen_cost: f64,
    pub feasible: bool,
}

fn eval_one<M: Dynamics, C: CostEstimator>(
    model: &M,
    cost_model: &C,
    start: &[f64],
    sequence: ArrayView2<'_, f64>,
    kappa: f64,
    cost_limit: f64,
    config: &CcemConfig,
) -> SequenceEval {
    let members = model.members();
    let sd = start.len();
    let mut cur = vec![0.0; sd];
    let mut nxt = vec![0.0; sd];
    let mut total_ret = 0.0;
    let mut total_pen = 0.0;
    for p in 0..config.particles {
        let member = p % members;
        cur.copy_from_slice(start);
        let mut g = 1.0;
        let mut gc = 1.0;
        let mut ret = 0.0;
        let mut pen = 0.0;
        for t in 0..config.horizon {
            let action = sequence.row(t);
            let a = action.as_slice().expect("contiguous action row");
            let r = model.step(member, &cur, a, &mut nxt);
            let c = cost_model.cost(&cur, a);
            let u = model.uncertainty(&cur, a);
            if !r.is_finite() || !c.is_finite() || !u.is_finite() || nxt.iter().any(|v| !v.is_finite()) {
                return SequenceEval {
                    ret: f64::NEG_INFINITY,
                    pen_cost: f64::INFINITY,
                    feasible: false,
                };
            }
            ret += g * r;
            pen += gc * (c + kappa * u);
            g *= config.discount;
            gc *= config.cost_discount;
            std::mem::swap(&mut cur, &mut nxt);
        }
        total_ret += ret;
        total_pen += pen;
    }
    let inv = 1.0 / config.particles as f64;
    let ret = total_ret * inv;
    let pen_cost = total_pen * inv;
    SequenceEval {
        ret,
        pen_cost,
        feasible: pen_cost <= cost_limit,
    }
}

/// Rolls every sequence through the model and scores it. Results come back
/// in sequence order regardless of how the work is scheduled.
pub fn evaluate_sequences<M: Dynamics, C: CostEstimator>(
    model: &M,
    cost_model: &C,
    start: &[f64],
    sequences: &Array3<f64>,
    kappa: f64,
    cost_limit: f64,
    config: &CcemConfig,
) -> Vec<SequenceEval> {
    let n = sequences.len_of(Axis(0));
    (0..n)
        .into_par_iter()
        .map(|i| {
            eval_one(
                model,
                cost_model,
                start,
                sequences.index_axis(Axis(0), i),
                kappa,
                cost_limit,
                config,
            )
        })
        .collect()
}

/// Picks the elite indices: the E feasible sequences with the highest
/// return when at least E are feasible, otherwise the E sequences with the
/// lowest penalized cost. Ties fall to the lower index.
pub fn select_elites(evals: &[SequenceEval], elites: usize) -> Result<Vec<usize>> {
    if evals.len() < elites {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {elites} elites from {} evaluations",
            evals.len()
        )));
    }
    let feasible: Vec<usize> = (0..evals.len()).filter(|&i| evals[i].feasible).collect();
    let mut order;
    if feasible.len() >= elites {
        order = feasible;
        order.sort_by(|&a, &b| {
            evals[b]
                .ret
                .total_cmp(&evals[a].ret)
                .then(a.cmp(&b))
        });
    } else {
        order = (0..evals.len()).collect();
        order.sort_by(|&a, &b| {
            evals[a]
                .pen_cost
                .total_cmp(&evals[b].pen_cost)
                .then(a.cmp(&b))
        });
    }
    order.truncate(elites);
    Ok(order)
}

/// Maximum-likelihood refit of the sampling Gaussian to the elite
/// sequences: per-entry sample mean and population variance, floored.
pub fn refit(sequences: &Array3<f64>, elite_idx: &[usize]) -> Result<SamplingDistribution> {
    if elite_idx.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "refit needs at least 2 elites, got {}",
            elite_idx.len()
        )));
    }
    let (_, h, d) = sequences.dim();
    let e = elite_idx.len() as f64;
    let mut mean = Array2::<f64>::zeros((h, d));
    let mut variance = Array2::<f64>::zeros((h, d));
    for &i in elite_idx {
        mean += &sequences.index_axis(Axis(0), i);
    }
    mean.mapv_inplace(|v| v / e);
    for &i in elite_idx {
        let seq = sequences.index_axis(Axis(0), i);
        for t in 0..h {
            for k in 0..d {
                let diff = seq[(t, k)] - mean[(t, k)];
                variance[(t, k)] += diff * diff;
            }
        }
    }
    variance.mapv_inplace(|v| (v / e).max(VARIANCE_FLOOR));
    Ok(SamplingDistribution { mean, variance })
}

fn sample_population(
    dist: &SamplingDistribution,
    config: &CcemConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Array3<f64>,
) {
    for n in 0..config.population {
        for t in 0..config.horizon {
            for d in 0..config.action_dim {
                let z: f64 = StandardNormal.sample(rng);
                let a = dist.mean[(t, d)] + dist.variance[(t, d)].sqrt() * z;
                out[(n, t, d)] = a.clamp(config.action_low[d], config.action_high[d]);
            }
        }
    }
}

/// The previous plan advanced one step: row t becomes row t+1's value and
/// the final row is repeated. Callers use this as the warm-started mean.
pub fn shifted_mean(previous: &Array2<f64>) -> Array2<f64> {
    let (h, d) = previous.dim();
    let mut out = Array2::zeros((h, d));
    for t in 0..h {
        let src = (t + 1).min(h - 1);
        for k in 0..d {
            out[(t, k)] = previous[(src, k)];
        }
    }
    out
}

/// Full planning call: I rounds of sample, evaluate, select, refit. Returns
/// the final mean sequence, clipped to the action bounds.
#[allow(clippy::too_many_arguments)]
pub fn plan<M: Dynamics, C: CostEstimator>(
    model: &M,
    cost_model: &C,
    start: &[f64],
    cost_limit: f64,
    kappa: f64,
    config: &CcemConfig,
    init_mean: Option<&Array2<f64>>,
    seed: u64,
) -> Result<Array2<f64>> {
    config.validate()?;
    if start.len() != model.state_dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("start state of dim {}", model.state_dim()),
            got: format!("{}", start.len()),
        });
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "penalty weight must be nonnegative and finite, got {kappa}"
        )));
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("planning start state".into()));
    }
    let mean = match init_mean {
        Some(m) => {
            if m.dim() != (config.horizon, config.action_dim) {
                return Err(Error::ShapeMismatch {
                    expected: format!("mean [{}, {}]", config.horizon, config.action_dim),
                    got: format!("{:?}", m.dim()),
                });
            }
            m.clone()
        }
        None => config.init_mean.clone(),
    };
    let mut dist = SamplingDistribution::new(mean, config.init_var.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Array3::zeros((config.population, config.horizon, config.action_dim));
    for _ in 0..config.iterations {
        sample_population(&dist, config, &mut rng, &mut sequences);
        let evals = evaluate_sequences(model, cost_model, start, &sequences, kappa, cost_limit, config);
        let elite_idx = select_elites(&evals, config.elites)?;
        dist = refit(&sequences, &elite_idx)?;
    }
    let mut mean = dist.mean;
    for t in 0..config.horizon {
        for d in 0..config.action_dim {
            mean[(t, d)] = mean[(t, d)].clamp(config.action_low[d], config.action_high[d]);
        }
    }
    Ok(mean)
}
