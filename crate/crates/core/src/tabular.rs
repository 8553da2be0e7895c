//! Count-based transition estimation and uncertainty penalties for finite
//! state-action spaces.
//!
//! Visit counts feed two things: a maximum-likelihood transition table, and a
//! per-pair penalty u(s, a) that prices how wrong that table might be. The
//! certified penalty is a concentration bound on total variation that holds
//! for all pairs at once with probability 1 - delta; the practical penalty is
//! the 1/sqrt(n) shape alone, leaving the scale to a feedback controller.

use ndarray::{Array2, Array3};

use crate::cmdp::Cmdp;
use crate::error::{Error, Result};

/// Which penalty construction produced a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    /// High-probability bound for a single fitted model.
    CertifiedSingle { delta: f64 },
    /// Union bound across `rounds` refits over a training run.
    CertifiedTraining { delta: f64, rounds: u64 },
    /// 1/sqrt(n) with no confidence attached.
    Practical,
}

/// A per-pair penalty table in [0, 1], tagged with its construction.
#[derive(Debug, Clone)]
pub struct PenaltyTable {
    pub u: Array2<f64>,
    pub kind: PenaltyKind,
}

/// Transition counts over a finite state-action space.
#[derive(Debug, Clone)]
pub struct CountTable {
    n_sa: Array2<u64>,
    n_sas: Array3<u64>,
}

impl CountTable {
    pub fn new(n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument(
                "count table needs at least one state and one action".into(),
            ));
        }
        Ok(Self {
            n_sa: Array2::zeros((n_states, n_actions)),
            n_sas: Array3::zeros((n_states, n_actions, n_states)),
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_sa.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.n_sa.ncols()
    }

    /// Adds observed transitions (s, a, s').
    pub fn record(&mut self, transitions: &[(usize, usize, usize)]) -> Result<()> {
        let (ns, na) = self.n_sa.dim();
        for &(s, a, sp) in transitions {
            if s >= ns || a >= na || sp >= ns {
                return Err(Error::IndexOutOfRange(format!(
                    "transition ({s}, {a}, {sp}) outside [{ns}] x [{na}] x [{ns}]"
                )));
            }
            self.n_sa[(s, a)] += 1;
            self.n_sas[(s, a, sp)] += 1;
        }
        Ok(())
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.n_sa[(s, a)]
    }

    pub fn total(&self) -> u64 {
        self.n_sa.sum()
    }

    /// Maximum-likelihood transition table. Unvisited pairs get the uniform
    /// row, which keeps the result a valid kernel everywhere.
    pub fn fit_transitions(&self) -> Array3<f64> {
        let (ns, na) = self.n_sa.dim();
        let mut t = Array3::zeros((ns, na, ns));
        for s in 0..ns {
            for a in 0..na {
                let n = self.n_sa[(s, a)];
                if n == 0 {
                    t.slice_mut(ndarray::s![s, a, ..]).fill(1.0 / ns as f64);
                } else {
                    for sp in 0..ns {
                        t[(s, a, sp)] = self.n_sas[(s, a, sp)] as f64 / n as f64;
                    }
                }
            }
        }
        t
    }

    /// Clone of `cmdp` with the transition kernel replaced by the fit.
    pub fn fitted_cmdp(&self, cmdp: &Cmdp) -> Result<Cmdp> {
        if (self.n_states(), self.n_actions()) != (cmdp.n_states, cmdp.n_actions) {
            return Err(Error::ShapeMismatch {
                expected: format!("counts [{}, {}]", cmdp.n_states, cmdp.n_actions),
                got: format!("[{}, {}]", self.n_states(), self.n_actions()),
            });
        }
        cmdp.with_transition(self.fit_transitions())
    }

    /// Penalty `min(1, sqrt(|S| / (8 n) * ln(4 K |S| |A| / delta)))` per
    /// pair, with u = 1 where n = 0. With `rounds = Some(k)` the confidence
    /// is split across k refits; `None` means a single fit (k = 1).
    pub fn certified_penalty(&self, delta: f64, rounds: Option<u64>) -> Result<PenaltyTable> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level delta must lie in (0, 1), got {delta}"
            )));
        }
        let k = rounds.unwrap_or(1).max(1);
        let (ns, na) = self.n_sa.dim();
        let log_term = (4.0 * k as f64 * ns as f64 * na as f64 / delta).ln();
        let mut u = Array2::zeros((ns, na));
        for s in 0..ns {
            for a in 0..na {
                let n = self.n_sa[(s, a)];
                u[(s, a)] = if n == 0 {
                    1.0
                } else {
                    (ns as f64 / (8.0 * n as f64) * log_term).sqrt().min(1.0)
                };
            }
        }
        let kind = match rounds {
            Some(r) => PenaltyKind::CertifiedTraining { delta, rounds: r },
            None => PenaltyKind::CertifiedSingle { delta },
        };
        Ok(PenaltyTable { u, kind })
    }

    /// Penalty `1/sqrt(n)` per pair, u = 1 where n = 0.
    pub fn practical_penalty(&self) -> PenaltyTable {
        let u = self.n_sa.mapv(|n| {
            if n == 0 {
                1.0
            } else {
                1.0 / (n as f64).sqrt()
            }
        });
        PenaltyTable {
            u,
            kind: PenaltyKind::Practical,
        }
    }
}
