//! Bounds on demand at a budget that was never observed.
//!
//! Given probabilities on every other budget, the rational populations consistent
//! with them form the polytope `{nu >= 0 : A_obs nu = pi_obs}`. Any linear
//! functional of the implied choice probabilities on the target budget is bounded
//! by minimizing and maximizing it over that polytope.


use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::conetest::project;
use crate::enumerate::RationalMatrix;
use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::geometry::{patch_extrema, PatchTable};
use crate::lp::{equality_infeasibility, LinearProgram, Sense};

/// Phase-one residual above which observed probabilities count as inconsistent.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Largest number of column subsets the vertex oracle will try.
pub const VERTEX_ORACLE_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Probability of a patch of the target budget (0-based within the budget).
    PatchProb(usize),
    /// Expected demand for a good (0-based), in units of the normalized budget.
    ExpectedDemand(usize),
    /// `P(demand for good <= z)`.
    Cdf { good: usize, z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    /// 0-based index of the unobserved budget.
    pub target: usize,
    pub quantity: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub query: BoundQuery,
    pub lower: f64,
    pub upper: f64,
    pub status: &'static str,
    pub lp_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertices: Option<usize>,
}

/// Feasible set of populations given the observed budgets.
#[derive(Debug, Clone)]
pub struct Counterfactual<'a> {
    a: &'a RationalMatrix,
    t: &'a PatchTable,
    target: usize,
    pi_obs: Vec<f64>,
    /// Squared distance moved when observed probabilities had to be projected.
    projection_distance: Option<f64>,
}

/// Remove budget `j`'s block from a stacked probability vector.
pub fn drop_block(pi: &[f64], block_sizes: &[usize], j: usize) -> Result<Vec<f64>> {
    if block_sizes.iter().sum::<usize>() != pi.len() || j >= block_sizes.len() {
        return validation("probability vector does not match the block sizes");
    }
    let start: usize = block_sizes[..j].iter().sum();
    Ok(pi[..start].iter().chain(&pi[start + block_sizes[j]..]).copied().collect())
}

impl<'a> Counterfactual<'a> {
    /// `pi_obs` stacks the probabilities of every budget except `target`. When they
    /// are not consistent with any rational population, either fail or, with
    /// `project_infeasible`, replace them by their least-squares projection onto the
    /// cone of the observed budgets.
    pub fn new(
        a: &'a RationalMatrix,
        t: &'a PatchTable,
        target: usize,
        pi_obs: &[f64],
        project_infeasible: bool,
    ) -> Result<Self> {
        if a.block_sizes() != t.per_budget_counts() {
            return validation("rationalizable matrix does not match the patch table");
        }
        if target >= a.n_budgets() {
            return validation(format!("target budget {} out of range 1..={}", target + 1, a.n_budgets()));
        }
        let want = a.n_rows() - a.block_sizes()[target];
        if pi_obs.len() != want {
            return validation(format!("expected {want} observed probabilities, got {}", pi_obs.len()));
        }
        if let Some(v) = pi_obs.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return validation(format!("probability {v} outside [0, 1]"));
        }
        let mut cf = Counterfactual { a, t, target, pi_obs: pi_obs.to_vec(), projection_distance: None };
        let (cols, rhs) = cf.constraints();
        let gap = equality_infeasibility(&cols, &rhs)?;
        if gap > FEASIBILITY_TOL {
            if !project_infeasible {
                return Err(Error::Infeasible(format!(
                    "observed probabilities are not generated by any rational population \
                     (phase-one residual {gap:.3e}); project them onto the cone first"
                )));
            }
            let dense = cf.observed_matrix();
            let proj = project(&dense, &cf.pi_obs, &vec![1.0; want], 0.0)?;
            cf.pi_obs = proj.eta.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            cf.projection_distance = Some(proj.objective);
        }
        Ok(cf)
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Probabilities actually used, after any projection.
    pub fn observed(&self) -> &[f64] {
        &self.pi_obs
    }

    pub fn projection_distance(&self) -> Option<f64> {
        self.projection_distance
    }

    /// Map from row of `A` to row of the observed system.
    fn observed_row(&self, r: usize) -> Option<usize> {
        let off = self.a.offsets();
        let (lo, hi) = (off[self.target], off[self.target] + self.a.block_sizes()[self.target]);
        if r < lo {
            Some(r)
        } else if r < hi {
            None
        } else {
            Some(r - (hi - lo))
        }
    }

    /// Column-wise equality system `A_obs nu = pi_obs`, plus `sum nu = 1` when no
    /// other budget is observed.
    fn constraints(&self) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
        let only = self.a.n_budgets() == 1;
        let cols = (0..self.a.n_cols())
            .map(|h| {
                let mut c: Vec<(usize, f64)> =
                    self.a.column_rows(h).filter_map(|r| self.observed_row(r)).map(|r| (r, 1.0)).collect();
                if only {
                    c.push((0, 1.0));
                }
                c
            })
            .collect();
        let rhs = if only { vec![1.0] } else { self.pi_obs.clone() };
        (cols, rhs)
    }

    fn observed_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.pi_obs.len(), self.a.n_cols());
        for h in 0..self.a.n_cols() {
            for r in self.a.column_rows(h).filter_map(|r| self.observed_row(r)) {
                m[(r, h)] = 1.0;
            }
        }
        m
    }

    /// Within-budget patch each column picks on the target budget.
    fn target_picks(&self) -> Vec<usize> {
        (0..self.a.n_cols()).map(|h| self.a.column(h)[self.target] as usize).collect()
    }

    /// Per-patch values of the functional for the lower and upper bound.
    fn patch_values(&self, q: &Quantity) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.a.block_sizes()[self.target];
        let off = self.t.offsets()[self.target];
        let extrema =
            |k: usize| -> Result<Vec<(f64, f64)>> { (0..n).map(|i| patch_extrema(self.t, off + i, k)).collect() };
        Ok(match *q {
            Quantity::PatchProb(i) => {
                if i >= n {
                    return validation(format!("patch {} out of range 1..={n}", i + 1));
                }
                let e: Vec<f64> = (0..n).map(|p| f64::from(u8::from(p == i))).collect();
                (e.clone(), e)
            }
            Quantity::ExpectedDemand(k) => {
                let ex = extrema(k)?;
                (ex.iter().map(|e| e.0).collect(), ex.iter().map(|e| e.1).collect())
            }
            Quantity::Cdf { good, z } => {
                if !(z >= 0.0) {
                    return validation(format!("CDF threshold must be nonnegative, got {z}"));
                }
                let ex = extrema(good)?;
                (
                    ex.iter().map(|e| f64::from(u8::from(e.1 <= z))).collect(),
                    ex.iter().map(|e| f64::from(u8::from(e.0 <= z))).collect(),
                )
            }
        })
    }

    pub fn bound(&self, q: &Quantity) -> Result<Bounds> {
        let (lo_vals, hi_vals) = self.patch_values(q)?;
        self.bound_with_values(q, &lo_vals, &hi_vals)
    }

    fn bound_with_values(&self, q: &Quantity, lo_vals: &[f64], hi_vals: &[f64]) -> Result<Bounds> {
        let picks = self.target_picks();
        let (cols, rhs) = self.constraints();
        let mut lp = LinearProgram::new(self.a.n_cols());
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rhs.len()];
        for (h, c) in cols.iter().enumerate() {
            for &(r, v) in c {
                rows[r].push((h, v));
            }
        }
        for (row, &b) in rows.into_iter().zip(&rhs) {
            lp.add_row(row, Sense::Eq, b);
        }
        let mut iterations = 0;
        let mut solve = |values: &[f64], maximize: bool| -> Result<f64> {
            let cost: Vec<f64> = picks.iter().map(|&p| values[p]).collect();
            if maximize {
                lp.maximize(cost);
            } else {
                lp.minimize(cost);
            }
            let s = lp.solve()?;
            iterations += s.iterations;
            if !s.is_optimal() {
                return Err(Error::Infeasible(format!(
                    "bound LP is {:?}; observed probabilities are not generated by any rational population",
                    s.status
                )));
            }
            Ok(s.objective)
        };
        let lower = solve(lo_vals, false)?;
        let upper = solve(hi_vals, true)?;
        let (lower, upper) = match q {
            Quantity::ExpectedDemand(_) => (lower, upper.max(lower)),
            _ => (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0).max(lower.clamp(0.0, 1.0))),
        };
        Ok(Bounds {
            query: BoundQuery { target: self.target, quantity: *q },
            lower,
            upper,
            status: "optimal",
            lp_iterations: iterations,
            vertices: None,
        })
    }

    /// CDF bounds on a grid of thresholds, one pair of LPs per point.
    pub fn cdf_grid(&self, good: usize, zs: &[f64], exec: Execution) -> Result<Vec<Bounds>> {
        let n = self.a.block_sizes()[self.target];
        let off = self.t.offsets()[self.target];
        let ex: Vec<(f64, f64)> = (0..n).map(|i| patch_extrema(self.t, off + i, good)).collect::<Result<_>>()?;
        exec.map_slice(zs, |&z| {
            let q = Quantity::Cdf { good, z };
            if !(z >= 0.0) {
                return validation(format!("CDF threshold must be nonnegative, got {z}"));
            }
            let lo: Vec<f64> = ex.iter().map(|e| f64::from(u8::from(e.1 <= z))).collect();
            let hi: Vec<f64> = ex.iter().map(|e| f64::from(u8::from(e.0 <= z))).collect();
            self.bound_with_values(&q, &lo, &hi)
        })
        .into_iter()
        .collect()
    }

    /// Bounds by enumerating every vertex of the feasible polytope. Exponential in
    /// the number of columns; meant for checking the LP on small problems.
    pub fn vertex_bounds(&self, q: &Quantity) -> Result<Bounds> {
        let (lo_vals, hi_vals) = self.patch_values(q)?;
        let vertices = self.vertices()?;
        if vertices.is_empty() {
            return Err(Error::Infeasible("feasible set has no vertices".into()));
        }
        let picks = self.target_picks();
        let value = |nu: &[f64], vals: &[f64]| -> f64 { nu.iter().zip(&picks).map(|(x, &p)| x * vals[p]).sum() };
        let lower = vertices.iter().map(|v| value(v, &lo_vals)).fold(f64::INFINITY, f64::min);
        let upper = vertices.iter().map(|v| value(v, &hi_vals)).fold(f64::NEG_INFINITY, f64::max);
        Ok(Bounds {
            query: BoundQuery { target: self.target, quantity: *q },
            lower,
            upper,
            status: "vertex-enumeration",
            lp_iterations: 0,
            vertices: Some(vertices.len()),
        })
    }

    /// Basic feasible solutions of `A_obs nu = pi_obs, nu >= 0`, deduplicated.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        let (cols, rhs) = self.constraints();
        let (m, h) = (rhs.len(), cols.len());
        let mut c = DMatrix::<f64>::zeros(m, h);
        for (j, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                c[(r, j)] = v;
            }
        }
        let rank = c.clone().svd(false, false).rank(1e-9);
        let subsets = binomial(h as u128, rank as u128);
        if subsets > VERTEX_ORACLE_CAP {
            return Err(Error::CapExceeded {
                what: "vertex-enumeration subsets",
                value: subsets,
                cap: VERTEX_ORACLE_CAP,
                hint: "; use the LP bounds instead",
            });
        }
        let b = nalgebra::DVector::from_column_slice(&rhs);
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut idx: Vec<usize> = (0..rank).collect();
        loop {
            let sub = c.select_columns(idx.iter());
            let svd = sub.clone().svd(true, true);
            if svd.rank(1e-9) == rank {
                if let Ok(x) = svd.solve(&b, 1e-12) {
                    let resid = (&sub * &x - &b).amax();
                    if resid < 1e-9 && x.iter().all(|v| *v >= -1e-10) {
                        let mut nu = vec![0.0; h];
                        for (k, &j) in idx.iter().enumerate() {
                            nu[j] = x[k].max(0.0);
                        }
                        if !out.iter().any(|v| v.iter().zip(&nu).all(|(a, b)| (a - b).abs() < 1e-9)) {
                            out.push(nu);
                        }
                    }
                }
            }
            if !next_combination(&mut idx, h) {
                break;
            }
        }
        Ok(out)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
