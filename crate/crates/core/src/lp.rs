//! Dense two-phase primal simplex.
//!
//! Solves `min c.x  s.t.  A_eq x = b_eq, A_ub x <= b_ub, x >= 0` on a dense
//! tableau. Phase 1 minimizes the sum of artificial variables to find a basic
//! feasible point (or prove there is none); phase 2 optimizes the real
//! objective. Pivot selection is Dantzig's rule with deterministic
//! lowest-index tie-breaking, switching to Bland's rule after a run of
//! degenerate pivots so cycling cannot occur. Identical inputs produce
//! bit-identical outcomes.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// `min objective . x` subject to `eq_lhs x = eq_rhs`, `ub_lhs x <= ub_rhs`,
/// and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Array1<f64>,
    pub eq_lhs: Array2<f64>,
    pub eq_rhs: Array1<f64>,
    pub ub_lhs: Array2<f64>,
    pub ub_rhs: Array1<f64>,
}

impl LinearProgram {
    /// A program over `objective.len()` variables with no constraints yet.
    pub fn new(objective: Array1<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            eq_lhs: Array2::zeros((0, n)),
            eq_rhs: Array1::zeros(0),
            ub_lhs: Array2::zeros((0, n)),
            ub_rhs: Array1::zeros(0),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if n == 0 {
            return Err(Error::InvalidArgument("objective has no variables".into()));
        }
        if self.eq_lhs.ncols() != n || self.ub_lhs.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} columns"),
                got: format!("eq {}, ub {}", self.eq_lhs.ncols(), self.ub_lhs.ncols()),
            });
        }
        if self.eq_lhs.nrows() != self.eq_rhs.len() || self.ub_lhs.nrows() != self.ub_rhs.len() {
            return Err(Error::ShapeMismatch {
                expected: "one rhs entry per constraint row".into(),
                got: format!(
                    "eq {}x{}, ub {}x{}",
                    self.eq_lhs.nrows(),
                    self.eq_rhs.len(),
                    self.ub_lhs.nrows(),
                    self.ub_rhs.len()
                ),
            });
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.eq_lhs.iter().all(|v| v.is_finite())
            && self.eq_rhs.iter().all(|v| v.is_finite())
            && self.ub_lhs.iter().all(|v| v.is_finite())
            && self.ub_rhs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("linear program coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Array1<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Entries smaller than this (in absolute value) are not eligible pivots.
    pub pivot_tol: f64,
    /// Feasibility threshold: phase 1 must drive the artificial objective
    /// below this, and the final point must satisfy constraints to this
    /// accuracy.
    pub residual_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: u32,
    /// Hard pivot cap; 0 picks a generous bound from the problem size.
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            residual_tol: 1e-7,
            degenerate_limit: 50,
            max_pivots: 0,
        }
    }
}

const TIE_TOL: f64 = 1e-12;

struct Tableau {
    a: Array2<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    /// Columns at or past this index are artificial and may never enter.
    enterable: usize,
    degenerate_run: u32,
    bland: bool,
    pivots: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let m = self.b.len();
        let total = self.a.ncols();
        let inv = 1.0 / self.a[(row, col)];
        for j in 0..total {
            self.a[(row, j)] *= inv;
        }
        self.b[row] *= inv;
        self.a[(row, col)] = 1.0;
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = self.a[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..total {
                self.a[(i, j)] -= f * self.a[(row, j)];
            }
            self.b[i] -= f * self.b[row];
            self.a[(i, col)] = 0.0;
        }
        let f = self.cost[col];
        if f != 0.0 {
            for j in 0..total {
                self.cost[j] -= f * self.a[(row, j)];
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Subtracts basic-variable costs from the cost row so every basic column
    /// has reduced cost zero.
    fn price_out(&mut self, full_cost: &[f64]) {
        self.cost = full_cost.to_vec();
        for i in 0..self.b.len() {
            let cb = full_cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..self.a.ncols() {
                self.cost[j] -= cb * self.a[(i, j)];
            }
        }
        for i in 0..self.b.len() {
            self.cost[self.basis[i]] = 0.0;
        }
    }

    fn entering(&self, opts: &SimplexOptions) -> Option<usize> {
        if self.bland {
            (0..self.enterable).find(|&j| self.cost[j] < -opts.pivot_tol)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.enterable {
                let c = self.cost[j];
                if c >= -opts.pivot_tol {
                    continue;
                }
                match best {
                    None => best = Some((j, c)),
                    // Strict improvement beyond the tie window keeps the
                    // lowest index among near-equal reduced costs.
                    Some((_, cb)) if c < cb - TIE_TOL => best = Some((j, c)),
                    _ => {}
                }
            }
            best.map(|(j, _)| j)
        }
    }

    fn leaving(&self, col: usize, opts: &SimplexOptions) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.b.len() {
            let coeff = self.a[(i, col)];
            if coeff <= opts.pivot_tol {
                continue;
            }
            let ratio = self.b[i] / coeff;
            match best {
                None => best = Some((i, ratio)),
                Some((bi, br)) => {
                    if ratio < br - TIE_TOL {
                        best = Some((i, ratio));
                    } else if (ratio - br).abs() <= TIE_TOL {
                        // Tied ratios: lowest row index normally, lowest basic
                        // variable index under Bland's rule.
                        let replace = if self.bland {
                            self.basis[i] < self.basis[bi]
                        } else {
                            false
                        };
                        if replace {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn run_phase(&mut self, opts: &SimplexOptions, max_pivots: usize) -> Result<PhaseEnd> {
        loop {
            let Some(col) = self.entering(opts) else {
                return Ok(PhaseEnd::Optimal);
            };
            let Some(row) = self.leaving(col, opts) else {
                return Ok(PhaseEnd::Unbounded);
            };
            let degenerate = self.b[row] <= TIE_TOL;
            self.pivot(row, col);
            if degenerate {
                self.degenerate_run += 1;
                if self.degenerate_run >= opts.degenerate_limit {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
                self.bland = false;
            }
            if self.pivots > max_pivots {
                return Err(Error::Numerical(format!(
                    "simplex exceeded {max_pivots} pivots"
                )));
            }
        }
    }

    fn objective_value(&self, full_cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .zip(self.b.iter())
            .map(|(&j, &v)| full_cost[j] * v)
            .sum()
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpOutcome> {
    lp.validate()?;
    let n = lp.objective.len();
    let me = lp.eq_rhs.len();
    let mu = lp.ub_rhs.len();
    let m = me + mu;

    if m == 0 {
        if lp.objective.iter().any(|c| *c < 0.0) {
            return Ok(LpOutcome::Unbounded);
        }
        return Ok(LpOutcome::Optimal {
            x: Array1::zeros(n),
            objective: 0.0,
        });
    }

    let max_pivots = if opts.max_pivots > 0 {
        opts.max_pivots
    } else {
        10_000.max(200 * (n + m))
    };

    // Standard form: slacks for inequality rows, then one artificial per row
    // that lacks an identity column (every equality row, and inequality rows
    // whose rhs had to be negated).
    let mut needs_artificial = vec![false; m];
    let mut rows = Array2::<f64>::zeros((m, n + mu));
    let mut b = vec![0.0; m];
    for i in 0..me {
        let flip = if lp.eq_rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[(i, j)] = flip * lp.eq_lhs[(i, j)];
        }
        b[i] = flip * lp.eq_rhs[i];
        needs_artificial[i] = true;
    }
    for k in 0..mu {
        let i = me + k;
        let flip = if lp.ub_rhs[k] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[(i, j)] = flip * lp.ub_lhs[(k, j)];
        }
        rows[(i, n + k)] = flip;
        b[i] = flip * lp.ub_rhs[k];
        needs_artificial[i] = flip < 0.0;
    }

    let n_art: usize = needs_artificial.iter().filter(|v| **v).count();
    let total = n + mu + n_art;
    let mut a = Array2::<f64>::zeros((m, total));
    a.slice_mut(ndarray::s![.., ..n + mu]).assign(&rows);
    let mut basis = vec![0usize; m];
    let mut next_art = n + mu;
    for i in 0..m {
        if needs_artificial[i] {
            a[(i, next_art)] = 1.0;
            basis[i] = next_art;
            next_art += 1;
        } else {
            basis[i] = n + (i - me);
        }
    }

    let mut t = Tableau {
        a,
        b,
        cost: vec![0.0; total],
        basis,
        enterable: n + mu,
        degenerate_run: 0,
        bland: false,
        pivots: 0,
    };

    // Phase 1: minimize the sum of artificial variables.
    if n_art > 0 {
        let mut phase1_cost = vec![0.0; total];
        phase1_cost[n + mu..total].fill(1.0);
        t.price_out(&phase1_cost);
        match t.run_phase(opts, max_pivots)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                return Err(Error::Numerical(
                    "phase 1 objective is bounded below by zero".into(),
                ))
            }
        }
        if t.objective_value(&phase1_cost) > opts.residual_tol {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive leftover artificials (basic at level zero) out of the basis
        // where possible; rows that admit no pivot are redundant and keep a
        // zero-valued artificial that can never re-enter or grow.
        for i in 0..m {
            if t.basis[i] < n + mu {
                continue;
            }
            if let Some(col) = (0..n + mu).find(|&j| t.a[(i, j)].abs() > opts.pivot_tol) {
                t.pivot(i, col);
            }
        }
    }

    // Phase 2: the real objective over structural and slack columns.
    let mut phase2_cost = vec![0.0; total];
    phase2_cost[..n].copy_from_slice(lp.objective.as_slice().expect("contiguous"));
    t.degenerate_run = 0;
    t.bland = false;
    t.price_out(&phase2_cost);
    match t.run_phase(opts, max_pivots)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => return Ok(LpOutcome::Unbounded),
    }

    let mut x = Array1::<f64>::zeros(n);
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.b[i];
        }
    }

    // The basic solution should satisfy the original constraints to working
    // accuracy; anything worse indicates the tableau drifted.
    let mut worst = 0.0f64;
    for i in 0..me {
        let lhs: f64 = (0..n).map(|j| lp.eq_lhs[(i, j)] * x[j]).sum();
        worst = worst.max((lhs - lp.eq_rhs[i]).abs());
    }
    for i in 0..mu {
        let lhs: f64 = (0..n).map(|j| lp.ub_lhs[(i, j)] * x[j]).sum();
        worst = worst.max((lhs - lp.ub_rhs[i]).max(0.0));
    }
    if worst > opts.residual_tol {
        return Err(Error::Numerical(format!(
            "solution residual {worst:.3e} exceeds {:.3e}",
            opts.residual_tol
        )));
    }

    let objective = lp.objective.dot(&x);
    Ok(LpOutcome::Optimal { x, objective })
}
