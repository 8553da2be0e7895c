//! Per-episode training records, their CSV serialization, and the
//! master-seed stream derivation shared by both experiments.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use anyhow::{bail, Context, Result};
use cap_core::ChaCha8Rng;
use rand::SeedableRng;

/// One training episode of one seed, as written to the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub seed: u64,
    /// 1-based episode index.
    pub episode: usize,
    /// Realized discounted return of this episode's policy.
    pub ret: f64,
    /// Realized discounted cost; this is exactly the signal the adaptive
    /// controller sees.
    pub cost: f64,
    /// Exact (gridworld) or replay-estimated (point mass) discounted cost
    /// of the deployed policy. Metrics only; never fed back to learning.
    pub true_cost: f64,
    /// Episodes so far, this one included, whose true cost exceeded the
    /// limit.
    pub cum_violations: u64,
    /// Penalty weight in effect while planning this episode; zero in the
    /// certified, none, and oracle modes.
    pub kappa: f64,
    /// Whether the budgeted program was infeasible and the cost-minimizing
    /// fallback was deployed instead.
    pub fallback: bool,
    /// Wall-clock episode duration. Diagnostic only: the one column that
    /// legitimately differs between identical runs.
    pub wall_ms: f64,
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<TrainRecord>,
    /// Times the true model was consulted, which must equal the episode
    /// count: once per episode, for metrics.
    pub true_eval_calls: u64,
}

pub const CSV_HEADER: &str =
    "seed,episode,return,cost,true_cost,cum_violations,kappa,fallback,wall_ms";

impl TrainRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.episode,
            self.ret,
            self.cost,
            self.true_cost,
            self.cum_violations,
            self.kappa,
            u8::from(self.fallback),
            self.wall_ms
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 9 {
            bail!("expected 9 CSV fields, got {} in {row:?}", fields.len());
        }
        Ok(Self {
            seed: fields[0].parse()?,
            episode: fields[1].parse()?,
            ret: fields[2].parse()?,
            cost: fields[3].parse()?,
            true_cost: fields[4].parse()?,
            cum_violations: fields[5].parse()?,
            kappa: fields[6].parse()?,
            fallback: match fields[7] {
                "0" => false,
                "1" => true,
                other => bail!("fallback flag must be 0 or 1, got {other:?}"),
            },
            wall_ms: fields[8].parse()?,
        })
    }
}

/// Writes one seed's records as `<dir>/<mode_slug>-seed<index>.csv`.
pub fn write_seed_csv(dir: &Path, mode_slug: &str, run: &SeedRun) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{mode_slug}-seed{}.csv", run.seed));
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{CSV_HEADER}")?;
    for record in &run.records {
        writeln!(w, "{}", record.to_csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV produced by [`write_seed_csv`].
pub fn read_seed_csv(path: &Path) -> Result<Vec<TrainRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => bail!("unexpected CSV header {other:?} in {}", path.display()),
    }
    lines.map(TrainRecord::from_csv_row).collect()
}

/// Independent random streams per (seed, purpose), all derived from one
/// master seed. Every seed index owns a fixed block of stream numbers, so
/// widening a sweep never changes the runs already in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Environment construction.
    Env = 0,
    /// Pre-training exploration (random policy or random actions).
    Explore = 1,
    /// Training-episode rollouts.
    Rollout = 2,
    /// Planner and model-fit seeding.
    Planner = 3,
    /// Metrics-only evaluation replays.
    Eval = 4,
}

const CHANNELS: u64 = 8;

pub fn stream_rng(master_seed: u64, seed_index: u64, channel: Channel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(seed_index * CHANNELS + channel as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample_record() -> TrainRecord {
        TrainRecord {
            seed: 3,
            episode: 17,
            ret: 0.4935218231,
            cost: 0.09817,
            true_cost: 0.10000000000000003,
            cum_violations: 2,
            kappa: 0.078125,
            fallback: true,
            wall_ms: 12.75,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let record = sample_record();
        let back = TrainRecord::from_csv_row(&record.to_csv_row()).unwrap();
        assert_eq!(back, record);
        assert_eq!(back.true_cost.to_bits(), record.true_cost.to_bits());
    }

    #[test]
    fn header_matches_row_arity() {
        assert_eq!(CSV_HEADER.split(',').count(), 9);
        assert_eq!(sample_record().to_csv_row().split(',').count(), 9);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let run = SeedRun {
            seed: 3,
            records: vec![sample_record()],
            true_eval_calls: 1,
        };
        write_seed_csv(dir.path(), "fixed-0.05", &run).unwrap();
        let path = dir.path().join("fixed-0.05-seed3.csv");
        let back = read_seed_csv(&path).unwrap();
        assert_eq!(back, run.records);
    }

    #[test]
    fn channels_are_independent_and_reproducible() {
        let mut a = stream_rng(7, 0, Channel::Env);
        let mut a2 = stream_rng(7, 0, Channel::Env);
        let mut b = stream_rng(7, 0, Channel::Rollout);
        let mut c = stream_rng(7, 1, Channel::Env);
        let xs: Vec<u64> = (0..4).map(|_| a.random()).collect();
        let xs2: Vec<u64> = (0..4).map(|_| a2.random()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.random()).collect();
        let zs: Vec<u64> = (0..4).map(|_| c.random()).collect();
        assert_eq!(xs, xs2);
        assert_ne!(xs, ys);
        assert_ne!(xs, zs);
    }
}
