//! A small two-phase revised simplex solver.
//!
//! Columns are stored sparse, which suits the 0/1 constraint matrices built from
//! the rational demand matrix (each column has one entry per budget). The basis
//! inverse is kept dense and refactored periodically. Entering and leaving
//! variables follow Bland's rule, so the method terminates on degenerate problems.
//!
//! All variables are nonnegative; callers split free variables themselves.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of the structural variables (meaningful when optimal).
    pub x: Vec<f64>,
    /// Objective value in the caller's sense (minimized or maximized).
    pub objective: f64,
    /// Optimal phase-one objective: zero iff the constraints are feasible.
    pub infeasibility: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
struct Row {
    entries: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    n_vars: usize,
    cost: Vec<f64>,
    maximize: bool,
    rows: Vec<Row>,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram {
            n_vars,
            cost: vec![0.0; n_vars],
            maximize: false,
            rows: Vec::new(),
            feasibility_tol: 1e-9,
            optimality_tol: 1e-10,
            max_iterations: 200_000,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn minimize(&mut self, cost: Vec<f64>) -> &mut Self {
        assert_eq!(cost.len(), self.n_vars);
        self.cost = cost;
        self.maximize = false;
        self
    }

    pub fn maximize(&mut self, cost: Vec<f64>) -> &mut Self {
        assert_eq!(cost.len(), self.n_vars);
        self.cost = cost;
        self.maximize = true;
        self
    }

    pub fn add_row(&mut self, entries: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> &mut Self {
        debug_assert!(entries.iter().all(|&(j, _)| j < self.n_vars));
        self.rows.push(Row { entries, sense, rhs });
        self
    }

    pub fn add_dense_row(&mut self, coeffs: &[f64], sense: Sense, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.n_vars);
        let entries = coeffs.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect();
        self.add_row(entries, sense, rhs)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Simplex::build(self).run(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

struct Simplex {
    m: usize,
    n_struct: usize,
    columns: Vec<Vec<(usize, f64)>>,
    kinds: Vec<Kind>,
    b: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Simplex {
    fn build(lp: &LinearProgram) -> Simplex {
        let m = lp.rows.len();
        let n = lp.n_vars;
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut kinds = vec![Kind::Structural; n];
        let mut b = vec![0.0; m];
        let mut basis = vec![usize::MAX; m];
        let mut artificial_rows = Vec::new();
        for (i, row) in lp.rows.iter().enumerate() {
            let flip = row.rhs < 0.0;
            let sgn = if flip { -1.0 } else { 1.0 };
            for &(j, v) in &row.entries {
                if v != 0.0 {
                    columns[j].push((i, sgn * v));
                }
            }
            b[i] = sgn * row.rhs;
            let sense = match (row.sense, flip) {
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (s, _) => s,
            };
            match sense {
                Sense::Le => {
                    basis[i] = columns.len();
                    columns.push(vec![(i, 1.0)]);
                    kinds.push(Kind::Slack);
                }
                Sense::Ge => {
                    columns.push(vec![(i, -1.0)]);
                    kinds.push(Kind::Slack);
                    artificial_rows.push(i);
                }
                Sense::Eq => artificial_rows.push(i),
            }
        }
        for i in artificial_rows {
            basis[i] = columns.len();
            columns.push(vec![(i, 1.0)]);
            kinds.push(Kind::Artificial);
        }
        let mut is_basic = vec![false; columns.len()];
        for &j in &basis {
            is_basic[j] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Simplex {
            m,
            n_struct: n,
            columns,
            kinds,
            xb: b.clone(),
            b,
            basis,
            is_basic,
            binv,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let n_total = self.columns.len();
        let phase1_cost: Vec<f64> = self.kinds.iter().map(|k| if *k == Kind::Artificial { 1.0 } else { 0.0 }).collect();
        let has_artificial = self.kinds.contains(&Kind::Artificial);
        let scale = self.b.iter().fold(1.0f64, |a, v| a.max(v.abs()));

        let mut infeasibility = 0.0;
        if has_artificial {
            loop {
                match self.step(&phase1_cost, lp, true)? {
                    Step::Optimal => break,
                    Step::Pivoted => {}
                    Step::Unbounded => return Err(Error::Internal("phase one reported unbounded".into())),
                }
            }
            infeasibility = self.objective_value(&phase1_cost);
            if infeasibility > lp.feasibility_tol * scale {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: self.structural_values(),
                    objective: f64::NAN,
                    infeasibility,
                    iterations: self.iterations,
                });
            }
            self.drive_out_artificials();
        }

        let sign = if lp.maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; n_total];
        for (j, c) in lp.cost.iter().enumerate() {
            cost[j] = sign * c;
        }
        loop {
            match self.step(&cost, lp, false)? {
                Step::Optimal => break,
                Step::Pivoted => {}
                Step::Unbounded => {
                    return Ok(LpSolution {
                        status: LpStatus::Unbounded,
                        x: self.structural_values(),
                        objective: if lp.maximize { f64::INFINITY } else { f64::NEG_INFINITY },
                        infeasibility,
                        iterations: self.iterations,
                    })
                }
            }
        }
        let x = self.structural_values();
        let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { status: LpStatus::Optimal, x, objective, infeasibility, iterations: self.iterations })
    }

    fn structural_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n_struct {
                x[j] = self.xb[i].max(0.0);
            }
        }
        x
    }

    fn objective_value(&self, cost: &[f64]) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&j, &v)| cost[j] * v).sum()
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, r) in y.iter_mut().zip(row) {
                    *yk += c * r;
                }
            }
        }
        y
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut u = vec![0.0; m];
        for &(r, v) in &self.columns[j] {
            for (i, ui) in u.iter_mut().enumerate() {
                *ui += self.binv[i * m + r] * v;
            }
        }
        u
    }

    fn step(&mut self, cost: &[f64], lp: &LinearProgram, phase_one: bool) -> Result<Step> {
        if self.iterations >= lp.max_iterations {
            return Err(Error::Solver {
                message: format!("simplex iteration cap {} reached", lp.max_iterations),
                objective: self.objective_value(cost),
                kkt: f64::NAN,
            });
        }
        let y = self.duals(cost);
        // Bland: lowest-index improving column.
        let mut entering = None;
        for j in 0..self.columns.len() {
            if self.is_basic[j] || (!phase_one && self.kinds[j] == Kind::Artificial) {
                continue;
            }
            let d = cost[j] - self.columns[j].iter().map(|&(r, v)| y[r] * v).sum::<f64>();
            if d < -lp.optimality_tol {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else {
            return Ok(Step::Optimal);
        };
        let u = self.ftran(j);
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.m {
            if u[i] > PIVOT_TOL {
                let theta = self.xb[i].max(0.0) / u[i];
                leave = match leave {
                    None => Some((i, theta)),
                    Some((k, best)) => {
                        let tie = (theta - best).abs() <= 1e-12 * (1.0 + best.abs());
                        if theta < best && !tie || tie && self.basis[i] < self.basis[k] {
                            Some((i, theta))
                        } else {
                            Some((k, best))
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else {
            return Ok(Step::Unbounded);
        };
        self.pivot(r, j, &u);
        Ok(Step::Pivoted)
    }

    fn pivot(&mut self, r: usize, j: usize, u: &[f64]) {
        let m = self.m;
        let piv = u[r];
        let theta = self.xb[r].max(0.0) / piv;
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i != r && u[i] != 0.0 {
                let f = u[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
                self.xb[i] -= f * theta;
            }
        }
        self.xb[r] = theta;
        self.is_basic[self.basis[r]] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Recompute the basis inverse from scratch by Gauss-Jordan elimination.
    fn refactor(&mut self) {
        let m = self.m;
        self.since_refactor = 0;
        let mut bmat = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.columns[j] {
                bmat[r * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let p = (col..m).max_by(|&a, &b| bmat[a * m + col].abs().total_cmp(&bmat[b * m + col].abs())).unwrap();
            if bmat[p * m + col].abs() < 1e-14 {
                // Keep the product-form inverse if the basis looks singular.
                return;
            }
            if p != col {
                for k in 0..m {
                    bmat.swap(p * m + k, col * m + k);
                    inv.swap(p * m + k, col * m + k);
                }
            }
            let d = bmat[col * m + col];
            for k in 0..m {
                bmat[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for i in 0..m {
                if i != col {
                    let f = bmat[i * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[i * m + k] -= f * bmat[col * m + k];
                            inv[i * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.binv[i * m + k] * self.b[k]).sum();
        }
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.kinds[self.basis[r]] != Kind::Artificial {
                continue;
            }
            let m = self.m;
            let mut replacement = None;
            for j in 0..self.columns.len() {
                if self.is_basic[j] || self.kinds[j] == Kind::Artificial {
                    continue;
                }
                let ur: f64 = self.columns[j].iter().map(|&(row, v)| self.binv[r * m + row] * v).sum();
                if ur.abs() > 1e-7 {
                    replacement = Some(j);
                    break;
                }
            }
            if let Some(j) = replacement {
                let u = self.ftran(j);
                // Degenerate pivot: the artificial sits at zero.
                self.xb[r] = 0.0;
                let piv = u[r];
                for k in 0..m {
                    self.binv[r * m + k] /= piv;
                }
                for i in 0..m {
                    if i != r && u[i] != 0.0 {
                        let f = u[i];
                        for k in 0..m {
                            self.binv[i * m + k] -= f * self.binv[r * m + k];
                        }
                    }
                }
                self.is_basic[self.basis[r]] = false;
                self.is_basic[j] = true;
                self.basis[r] = j;
            }
            // Otherwise the row is redundant and the artificial stays basic at zero.
        }
        self.refactor();
    }
}

/// Phase-one check of `{x >= 0 : M x = rhs}` with `M` given by sparse columns.
/// Returns the minimal total artificial mass; zero (to tolerance) iff feasible.
pub fn equality_infeasibility(columns: &[Vec<(usize, f64)>], rhs: &[f64]) -> Result<f64> {
    let mut lp = LinearProgram::new(columns.len());
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rhs.len()];
    for (j, col) in columns.iter().enumerate() {
        for &(r, v) in col {
            rows[r].push((j, v));
        }
    }
    for (r, entries) in rows.into_iter().enumerate() {
        lp.add_row(entries, Sense::Eq, rhs[r]);
    }
    lp.feasibility_tol = f64::INFINITY;
    let sol = lp.solve()?;
    Ok(sol.infeasibility)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.maximize(vec![3.0, 5.0]);
        lp.add_dense_row(&[1.0, 0.0], Sense::Le, 4.0);
        lp.add_dense_row(&[0.0, 2.0], Sense::Le, 12.0);
        lp.add_dense_row(&[3.0, 2.0], Sense::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.objective, 36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y + 3z st x + y + z = 1, y + z >= 0.5
        let mut lp = LinearProgram::new(3);
        lp.minimize(vec![1.0, 2.0, 3.0]);
        lp.add_dense_row(&[1.0, 1.0, 1.0], Sense::Eq, 1.0);
        lp.add_dense_row(&[0.0, 1.0, 1.0], Sense::Ge, 0.5);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 1.5, epsilon = 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_dense_row(&[1.0], Sense::Ge, 2.0);
        lp.add_dense_row(&[1.0], Sense::Le, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(2);
        lp.maximize(vec![1.0, 0.0]);
        lp.add_dense_row(&[1.0, -1.0], Sense::Le, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_and_redundant_rows() {
        // -x - y = -2 twice (redundant), min x
        let mut lp = LinearProgram::new(2);
        lp.minimize(vec![1.0, 0.0]);
        lp.add_dense_row(&[-1.0, -1.0], Sense::Eq, -2.0);
        lp.add_dense_row(&[-1.0, -1.0], Sense::Eq, -2.0);
        let s = lp.solve().unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook Dantzig rule.
        let mut lp = LinearProgram::new(4);
        lp.minimize(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_dense_row(&[0.25, -60.0, -0.04, 9.0], Sense::Le, 0.0);
        lp.add_dense_row(&[0.5, -90.0, -0.02, 3.0], Sense::Le, 0.0);
        lp.add_dense_row(&[0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.objective, -0.05, epsilon = 1e-9);
    }

    #[test]
    fn phase_one_residual() {
        let cols = vec![vec![(0, 1.0), (1, 1.0)]];
        assert!(equality_infeasibility(&cols, &[0.5, 0.5]).unwrap() < 1e-12);
        assert!(equality_infeasibility(&cols, &[0.5, 0.7]).unwrap() > 0.1);
    }
}
