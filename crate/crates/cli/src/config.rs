//! Run configuration: experiment selection, penalty mode, and every knob
//! the harness exposes. A flat JSON file can set any field; command-line
//! flags override the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gridworld,
    Pointmass,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Experiment::Gridworld => write!(f, "gridworld"),
            Experiment::Pointmass => write!(f, "pointmass"),
        }
    }
}

/// How the planning cost is inflated, and whether the weight adapts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Visit-count penalty with a feedback-controlled weight.
    Adaptive,
    /// Visit-count penalty with a constant weight.
    Fixed(f64),
    /// Concentration-bound penalty for the final fitted model, weight
    /// fixed at discount / (1 - discount) times the cost ceiling.
    Certified(f64),
    /// Concentration-bound penalty union-bounded over a training run of
    /// the given number of refits.
    CertifiedTraining(f64, u64),
    /// No penalty: plan directly on the fitted model.
    None,
    /// Plan on the true dynamics; the performance ceiling.
    Oracle,
}

impl Mode {
    /// Filesystem-safe name used in output paths and CSV file names.
    pub fn slug(&self) -> String {
        match self {
            Mode::Adaptive => "adaptive".into(),
            Mode::Fixed(k) => format!("fixed-{k}"),
            Mode::Certified(d) => format!("certified-{d}"),
            Mode::CertifiedTraining(d, k) => format!("certified-training-{d}-{k}"),
            Mode::None => "none".into(),
            Mode::Oracle => "oracle".into(),
        }
    }
}

/// `Display` prints the same syntax `FromStr` accepts, so configs
/// round-trip through JSON.
impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Adaptive => write!(f, "adaptive"),
            Mode::Fixed(k) => write!(f, "fixed:{k}"),
            Mode::Certified(d) => write!(f, "certified:{d}"),
            Mode::CertifiedTraining(d, k) => write!(f, "certified-training:{d},{k}"),
            Mode::None => write!(f, "none"),
            Mode::Oracle => write!(f, "oracle"),
        }
    }
}

impl FromStr for Mode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("fixed:") {
            let kappa: f64 = rest.parse().context("fixed:<kappa> needs a number")?;
            if !kappa.is_finite() || kappa < 0.0 {
                bail!("fixed penalty weight must be nonnegative and finite, got {rest}");
            }
            return Ok(Mode::Fixed(kappa));
        }
        if let Some(rest) = s.strip_prefix("certified-training:") {
            let (delta, rounds) = rest
                .split_once(',')
                .context("certified-training:<delta>,<rounds>")?;
            let delta: f64 = delta.parse().context("certified-training delta")?;
            let rounds: u64 = rounds.parse().context("certified-training rounds")?;
            check_delta(delta)?;
            if rounds == 0 {
                bail!("certified-training needs at least one round");
            }
            return Ok(Mode::CertifiedTraining(delta, rounds));
        }
        if let Some(rest) = s.strip_prefix("certified:") {
            let delta: f64 = rest.parse().context("certified:<delta> needs a number")?;
            check_delta(delta)?;
            return Ok(Mode::Certified(delta));
        }
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "none" => Ok(Mode::None),
            "oracle" => Ok(Mode::Oracle),
            other => bail!(
                "unknown mode {other:?}; expected adaptive, fixed:<kappa>, certified:<delta>, \
                 certified-training:<delta>,<rounds>, none, or oracle"
            ),
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        bail!("confidence level delta must lie in (0, 1), got {delta}");
    }
    Ok(())
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything a run needs. Field defaults reproduce the benchmark setup;
/// the smaller knobs exist so tests can shrink runs without changing what
/// is being measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub mode: Mode,
    pub seeds: usize,
    /// Training episodes (planning iterations). 30 for the gridworld,
    /// 100 for the point mass.
    pub episodes: usize,
    /// Controller gain for the adaptive mode.
    pub alpha: f64,
    pub master_seed: u64,
    /// Output directory for CSVs and summary.json; nothing is written
    /// when unset.
    pub out: Option<PathBuf>,

    // Gridworld knobs.
    /// Random-policy transitions collected before the first planning step.
    pub init_samples: usize,
    /// Episodes rolled out per planning iteration.
    pub rollout_episodes: usize,
    /// Steps per rollout episode.
    pub rollout_len: usize,

    // Point-mass knobs.
    /// Random-action steps collected before the first planning step.
    pub explore_steps: usize,
    /// Ensemble members for the learned dynamics model.
    pub members: usize,
    /// Sampled action sequences per optimizer iteration.
    pub population: usize,
    /// Sequences kept when refitting the sampling distribution.
    pub elites: usize,
    /// Optimizer iterations per planning call.
    pub iterations: usize,
    /// Planning horizon in steps.
    pub horizon: usize,
    /// Model rollouts averaged per sequence evaluation.
    pub particles: usize,
    /// Seed the sampler from the previous plan shifted one step.
    pub warm_start: bool,
    /// Initial penalty weight for the point-mass adaptive mode.
    pub kappa0: f64,
    /// Fresh-noise replays of the executed actions for the exact-cost
    /// estimate.
    pub eval_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Gridworld,
            mode: Mode::Adaptive,
            seeds: 1,
            episodes: 30,
            alpha: 0.1,
            master_seed: 0,
            out: None,
            init_samples: 500,
            rollout_episodes: 5,
            rollout_len: 100,
            explore_steps: 1000,
            members: 5,
            population: 500,
            elites: 50,
            iterations: 5,
            horizon: 30,
            particles: 5,
            warm_start: true,
            kappa0: 1.0,
            eval_episodes: 20,
        }
    }
}

impl RunConfig {
    /// Defaults for the named experiment (they differ in episode count).
    pub fn for_experiment(experiment: Experiment) -> Self {
        let mut cfg = Self { experiment, ..Self::default() };
        if experiment == Experiment::Pointmass {
            cfg.episodes = 100;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            bail!("need at least one seed");
        }
        if self.episodes == 0 {
            bail!("need at least one episode");
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            bail!("controller gain must be positive and finite, got {}", self.alpha);
        }
        if self.experiment == Experiment::Pointmass {
            match self.mode {
                Mode::Certified(_) | Mode::CertifiedTraining(_, _) => bail!(
                    "certified penalties need visit counts and only apply to the gridworld"
                ),
                Mode::Oracle => {
                    bail!("the oracle planner is exact-dynamics LP and only applies to the gridworld")
                }
                _ => {}
            }
            if self.episodes < 1 || self.horizon == 0 {
                bail!("point-mass runs need episodes >= 1 and a nonzero horizon");
            }
        }
        if self.experiment == Experiment::Gridworld
            && self.init_samples == 0
            && !matches!(self.mode, Mode::Oracle)
        {
            bail!("gridworld learning modes need a nonempty initial buffer");
        }
        Ok(())
    }
}

/// Flat key/value view of [`RunConfig`] used by `--config FILE`. Every
/// field is optional; omitted keys keep their defaults, and any key a CLI
/// flag also sets loses to the flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub experiment: Option<Experiment>,
    pub mode: Option<Mode>,
    pub seeds: Option<usize>,
    pub episodes: Option<usize>,
    pub alpha: Option<f64>,
    pub master_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub init_samples: Option<usize>,
    pub rollout_episodes: Option<usize>,
    pub rollout_len: Option<usize>,
    pub explore_steps: Option<usize>,
    pub members: Option<usize>,
    pub population: Option<usize>,
    pub elites: Option<usize>,
    pub iterations: Option<usize>,
    pub horizon: Option<usize>,
    pub particles: Option<usize>,
    pub warm_start: Option<bool>,
    pub kappa0: Option<f64>,
    pub eval_episodes: Option<usize>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Overlays the set fields onto `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! take {
            ($($field:ident),+ $(,)?) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })+
            };
        }
        take!(experiment, mode, seeds, episodes, alpha, master_seed);
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        take!(
            init_samples,
            rollout_episodes,
            rollout_len,
            explore_steps,
            members,
            population,
            elites,
            iterations,
            horizon,
            particles,
            warm_start,
            kappa0,
            eval_episodes,
        );
    }
}
