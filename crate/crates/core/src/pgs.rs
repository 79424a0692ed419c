//! Projected Gauss-Seidel for the minimum-norm point of a polyhedral cone.
//!
//! Finds the shortest `q` with `J q >= c` through the complementarity problem
//! `w = J J^T lambda - 4c`, `lambda >= 0`, `w >= 0`, `lambda . w = 0`, and
//! recovers `q = J^T lambda / 4`.

use nalgebra::{DMatrix, DVector};

use crate::error::PgsError;

pub const DEFAULT_MAX_SWEEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgsOptions {
    pub max_sweeps: usize,
    /// Absolute convergence threshold is `rel_tol * (1 + |c|_inf)`.
    pub rel_tol: f64,
}

impl Default for PgsOptions {
    fn default() -> Self {
        Self {
            max_sweeps: DEFAULT_MAX_SWEEPS,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgsSolution {
    pub q: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Sweeps performed.
    pub sweeps: usize,
    /// Largest scaled slack change in the last sweep.
    pub residual: f64,
    pub converged: bool,
}

/// Solves from a cold start. `J J^T` may be singular but needs a positive
/// diagonal.
pub fn solve(
    j: &DMatrix<f64>,
    c: &DVector<f64>,
    opts: &PgsOptions,
) -> Result<PgsSolution, PgsError> {
    if j.nrows() != c.len() {
        return Err(PgsError::Dimension(format!(
            "{} constraint rows but {} biases",
            j.nrows(),
            c.len()
        )));
    }
    let a = j * j.transpose();
    let (lambda, sweeps, residual) = solve_lcp(&a, c, opts)?;
    Ok(PgsSolution {
        q: j.transpose() * &lambda * 0.25,
        lambda,
        sweeps,
        residual,
        converged: residual <= opts.rel_tol * (1.0 + c.amax()),
    })
}

/// Runs the sweeps on a precomputed Gram matrix `a = J J^T`. Returns the
/// multipliers, the sweep count and the final residual.
pub fn solve_lcp(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    opts: &PgsOptions,
) -> Result<(DVector<f64>, usize, f64), PgsError> {
    let n = c.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(PgsError::Dimension(format!(
            "matrix is {}x{}, bias has {n} entries",
            a.nrows(),
            a.ncols()
        )));
    }
    for i in 0..n {
        if !(a[(i, i)] > 0.0) || !a[(i, i)].is_finite() || !c[i].is_finite() {
            return Err(PgsError::InvalidMatrix { row: i });
        }
    }
    let tol = opts.rel_tol * (1.0 + c.amax());
    let mut lambda = DVector::zeros(n);
    let mut change = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        change = 0.0f64;
        for i in 0..n {
            let row_dot = a.row(i).dot(&lambda.transpose());
            let next = (lambda[i] + (4.0 * c[i] - row_dot) / a[(i, i)]).max(0.0);
            // change of the scaled slack w_i / 4
            change = change.max(((next - lambda[i]) * a[(i, i)] * 0.25).abs());
            lambda[i] = next;
        }
        if change <= tol {
            return Ok((lambda, sweep, change));
        }
    }
    Ok((lambda, opts.max_sweeps, change))
}
