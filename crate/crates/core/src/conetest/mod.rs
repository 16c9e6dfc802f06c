//! Distance of estimated patch probabilities from the cone spanned by `A`, with
//! bootstrap critical values from a tightened version of the cone.

mod bootstrap;
mod hrep;
mod nnls;

pub use bootstrap::{
    bootstrap_test, recentered_draw, BootstrapConfig, Diagnostics, FnResampler, GaussianResampler,
    MultinomialResampler, Resampler, TestResult,
};
pub use hrep::{h_representation, verify_tightening, HRepresentation, TighteningReport};
pub use nnls::{project, ColumnOperator, Projection, DUAL_TOL, WARM_START_MIN_COLS, ZERO_OBJECTIVE};

use crate::enumerate::RationalMatrix;
use crate::error::{validation, Result};
use crate::lp::equality_infeasibility;

/// Phase-one residual at or below which a point counts as inside the cone.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Allowed deviation of a block sum from one.
pub const ADDING_UP_TOL: f64 = 1e-6;

/// Estimated patch probabilities, stacked by budget, with the sample sizes behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct PiVector {
    values: Vec<f64>,
    block_sizes: Vec<usize>,
    sample_sizes: Vec<usize>,
}

impl PiVector {
    pub fn new(values: Vec<f64>, block_sizes: Vec<usize>, sample_sizes: Vec<usize>) -> Result<Self> {
        Self::with_tolerance(values, block_sizes, sample_sizes, ADDING_UP_TOL)
    }

    /// Like [`PiVector::new`] with a custom adding-up tolerance. Clamped smoothed
    /// estimates need not sum to one exactly; pass `f64::INFINITY` to skip the check.
    pub fn with_tolerance(
        values: Vec<f64>,
        block_sizes: Vec<usize>,
        sample_sizes: Vec<usize>,
        tol: f64,
    ) -> Result<Self> {
        if block_sizes.iter().sum::<usize>() != values.len() {
            return validation(format!(
                "{} probabilities do not match block sizes summing to {}",
                values.len(),
                block_sizes.iter().sum::<usize>()
            ));
        }
        if sample_sizes.len() != block_sizes.len() {
            return validation("need one sample size per budget");
        }
        if let Some(v) = values.iter().find(|v| !(-ADDING_UP_TOL..=1.0 + ADDING_UP_TOL).contains(*v)) {
            return validation(format!("probability {v} outside [0, 1]"));
        }
        // Rounding can leave sums of probabilities a hair outside the unit interval.
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let pi = PiVector { values, block_sizes, sample_sizes };
        for (j, s) in pi.block_sums().iter().enumerate() {
            if (s - 1.0).abs() > tol {
                return validation(format!("probabilities on budget {} sum to {s}", j + 1));
            }
        }
        Ok(pi)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn sample_sizes(&self) -> &[usize] {
        &self.sample_sizes
    }

    pub fn total_n(&self) -> usize {
        self.sample_sizes.iter().sum()
    }

    pub fn block(&self, j: usize) -> &[f64] {
        let start: usize = self.block_sizes[..j].iter().sum();
        &self.values[start..start + self.block_sizes[j]]
    }

    pub fn block_sums(&self) -> Vec<f64> {
        (0..self.block_sizes.len()).map(|j| self.block(j).iter().sum()).collect()
    }

    fn check_against(&self, a: &RationalMatrix) -> Result<()> {
        if self.block_sizes != a.block_sizes() {
            return validation("probability blocks do not match the columns of A");
        }
        Ok(())
    }
}

/// Diagonal positive definite weighting of the squared distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Weighting {
    diag: Vec<f64>,
}

impl Weighting {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if let Some(v) = diag.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return validation(format!("weights must be positive, got {v}"));
        }
        Ok(Weighting { diag })
    }

    pub fn identity(n: usize) -> Self {
        Weighting { diag: vec![1.0; n] }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}

/// Project onto `{A nu : nu >= lower}`.
pub fn nnls_project(pi: &PiVector, a: &RationalMatrix, om: &Weighting, lower: f64) -> Result<Projection> {
    pi.check_against(a)?;
    project(a, pi.values(), om.diag(), lower)
}

/// `N` times the weighted squared distance from `pi` to `cone(A)`.
pub fn jn_statistic(pi: &PiVector, a: &RationalMatrix, om: &Weighting) -> Result<f64> {
    Ok(pi.total_n() as f64 * nnls_project(pi, a, om, 0.0)?.objective)
}

/// `sqrt(ln n / n)`.
pub fn default_tau(n: f64) -> Result<f64> {
    if !(n >= 2.0) || !n.is_finite() {
        return validation(format!("effective sample size must be at least 2, got {n}"));
    }
    Ok((n.ln() / n).sqrt())
}

/// Smallest per-budget sample size.
pub fn effective_n_counts(sample_sizes: &[usize]) -> f64 {
    sample_sizes.iter().copied().min().unwrap_or(0) as f64
}

/// `min_j N_j I_j / trace(v_j)` for smoothed estimators with per-budget asymptotic
/// variance traces.
pub fn effective_n_smoothed(sample_sizes: &[usize], block_sizes: &[usize], traces: &[f64]) -> Result<f64> {
    if sample_sizes.len() != block_sizes.len() || traces.len() != block_sizes.len() {
        return validation("need one sample size, block size and variance trace per budget");
    }
    let mut n = f64::INFINITY;
    for ((&nj, &ij), &tr) in sample_sizes.iter().zip(block_sizes).zip(traces) {
        if !(tr > 0.0) {
            return validation(format!("variance trace must be positive, got {tr}"));
        }
        n = n.min(nj as f64 * ij as f64 / tr);
    }
    Ok(n)
}

/// Is `pi = A nu` for some `nu >= 0`?
pub fn cone_membership(pi: &[f64], a: &RationalMatrix) -> Result<bool> {
    if pi.len() != a.n_rows() {
        return validation(format!("vector of length {} does not match {} rows", pi.len(), a.n_rows()));
    }
    let cols: Vec<Vec<(usize, f64)>> = (0..a.n_cols()).map(|h| a.column_rows(h).map(|r| (r, 1.0)).collect()).collect();
    Ok(equality_infeasibility(&cols, pi)? <= MEMBERSHIP_TOL)
}
