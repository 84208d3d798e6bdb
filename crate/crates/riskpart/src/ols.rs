//! Ordinary least squares with deterministic rank handling.
//!
//! The chain refits a regression for every proposed partition, and proposals
//! routinely produce degenerate designs (an emptied group contributes an
//! all-zero dummy column; two groups with identical carrier sets produce
//! duplicate columns). The fitter therefore:
//!
//! 1. prepends an intercept column and scans columns left to right,
//!    dropping any column whose residual against the span of the columns
//!    kept so far falls below a relative tolerance of `1e-10` (so the kept
//!    set is the deterministic "first seen wins" basis);
//! 2. solves the reduced problem by SVD with the same relative
//!    singular-value cutoff.
//!
//! Dropped columns are recorded by index so callers can report which model
//! terms were unidentifiable. Identical inputs give bit-identical fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for all rank decisions.
pub const RANK_REL_TOL: f64 = 1e-10;

/// A fitted linear model. `coef[r]` belongs to design column `retained[r]`;
/// column indices refer to the caller's design matrix (the intercept is
/// implicit and always present).
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub retained: Vec<usize>,
    pub dropped: Vec<usize>,
    pub rss: f64,
}

impl Fit {
    /// Number of estimated coefficients including the intercept.
    pub fn coefficient_count(&self) -> usize {
        self.coef.len() + 1
    }

    /// Predict a single observation given its full design row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut y = self.intercept;
        for (c, &col) in self.coef.iter().zip(&self.retained) {
            y += c * row[col];
        }
        y
    }

    /// Predict every row of a design matrix laid out like the training one.
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::from_element(x.nrows(), self.intercept);
        for (c, &col) in self.coef.iter().zip(&self.retained) {
            out.axpy(*c, &x.column(col).clone_owned(), 1.0);
        }
        out
    }
}

/// Least-squares fit of `y` on `[1 | x]`.
///
/// Errors when the design is empty, wider than it is tall after the rank
/// filter, contains nonfinite entries, or loses every supplied column to
/// the collinearity filter.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Fit> {
    let rows = x.nrows();
    let cols = x.ncols();
    if y.len() != rows {
        return Err(Error::usage(format!(
            "response has {} rows but design has {rows}",
            y.len()
        )));
    }
    if rows == 0 {
        return Err(Error::Fit("empty design: no rows".into()));
    }
    if cols == 0 {
        return Err(Error::Fit("empty design: no columns".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("design matrix contains nonfinite values".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("response contains nonfinite values".into()));
    }

    // First-kept rank filter via modified Gram-Schmidt (two passes per
    // column for numerical hygiene). Column 0 is the intercept and always
    // survives; a constant column in `x` is then the one that drops.
    let intercept_col = DVector::from_element(rows, 1.0);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols + 1);
    let mut retained = Vec::with_capacity(cols);
    let mut dropped = Vec::new();
    for idx in 0..=cols {
        let col = if idx == 0 {
            intercept_col.clone()
        } else {
            x.column(idx - 1).clone_owned()
        };
        let norm0 = col.norm();
        let mut resid = col;
        for _ in 0..2 {
            for q in &basis {
                let overlap = q.dot(&resid);
                resid.axpy(-overlap, q, 1.0);
            }
        }
        let rnorm = resid.norm();
        if rnorm <= RANK_REL_TOL * norm0 || norm0 == 0.0 {
            if idx == 0 {
                return Err(Error::Fit("cannot orthogonalize intercept".into()));
            }
            dropped.push(idx - 1);
        } else {
            if idx > 0 {
                retained.push(idx - 1);
            }
            basis.push(resid / rnorm);
        }
    }
    if retained.is_empty() {
        return Err(Error::Fit(
            "degenerate design: every column is collinear with the intercept".into(),
        ));
    }
    let kept_cols = retained.len() + 1;
    if rows < kept_cols {
        return Err(Error::Fit(format!(
            "underdetermined: {rows} rows for {kept_cols} retained columns"
        )));
    }

    let mut reduced = DMatrix::zeros(rows, kept_cols);
    reduced.column_mut(0).fill(1.0);
    for (slot, &col) in retained.iter().enumerate() {
        reduced.set_column(slot + 1, &x.column(col));
    }
    let svd = reduced.clone().svd(true, true);
    let sv_max = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let beta = svd
        .solve(y, sv_max * RANK_REL_TOL)
        .map_err(|e| Error::Fit(format!("svd solve failed: {e}")))?;
    let fitted = &reduced * &beta;
    let rss = (y - &fitted).norm_squared();

    Ok(Fit {
        intercept: beta[0],
        coef: beta.iter().skip(1).cloned().collect(),
        retained,
        dropped,
        rss,
    })
}
