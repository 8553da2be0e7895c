//! Dense linear solves for policy evaluation and model fitting.
//!
//! The systems solved here are small (at most a few hundred unknowns) and
//! either strictly diagonally dominant or ridge-regularized, so Gaussian
//! elimination with partial pivoting is accurate and there is no need for a
//! factorization library.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const SINGULAR_TOL: f64 = 1e-12;

/// Solves `a * x = b` for a single right-hand side.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let rhs = b
        .clone()
        .into_shape_with_order((b.len(), 1))
        .expect("vector reshape");
    let x = solve_multi(a, &rhs)?;
    Ok(x.column(0).to_owned())
}

/// Solves `a * x = b` where `b` holds one right-hand side per column.
pub fn solve_multi(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n} matrix with {n}-row rhs"),
            got: format!("{}x{} matrix, {}-row rhs", a.nrows(), a.ncols(), b.nrows()),
        });
    }
    let k = b.ncols();
    let mut m = a.clone();
    let mut r = b.clone();

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = m[(col, col)].abs();
        for row in col + 1..n {
            let v = m[(row, col)].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = row;
            }
        }
        if pivot_abs < SINGULAR_TOL {
            return Err(Error::SingularSystem {
                pivot: pivot_abs,
                column: col,
            });
        }
        if pivot_row != col {
            for j in col..n {
                m.swap((col, j), (pivot_row, j));
            }
            for j in 0..k {
                r.swap((col, j), (pivot_row, j));
            }
        }
        let pivot = m[(col, col)];
        for row in col + 1..n {
            let factor = m[(row, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                m[(row, j)] -= factor * m[(col, j)];
            }
            for j in 0..k {
                r[(row, j)] -= factor * r[(col, j)];
            }
        }
    }

    let mut x = Array2::zeros((n, k));
    for j in 0..k {
        for row in (0..n).rev() {
            let mut acc = r[(row, j)];
            for col in row + 1..n {
                acc -= m[(row, col)] * x[(col, j)];
            }
            x[(row, j)] = acc / m[(row, row)];
        }
    }
    Ok(x)
}
