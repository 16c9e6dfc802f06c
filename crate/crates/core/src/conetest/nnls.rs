//! Weighted nonnegative least squares by the Lawson-Hanson active-set method.

use nalgebra::{DMatrix, DVector};

use crate::enumerate::RationalMatrix;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;

/// Dual feasibility tolerance for the active-set method.
pub const DUAL_TOL: f64 = 1e-10;
/// Objectives at or below this are reported as exactly zero.
pub const ZERO_OBJECTIVE: f64 = 1e-13;
/// Above this many columns a projected-gradient pass picks the initial passive set.
pub const WARM_START_MIN_COLS: usize = 2000;

/// Column access for a matrix that may be stored sparsely.
pub trait ColumnOperator: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// `a_h' v`
    fn col_dot(&self, h: usize, v: &[f64]) -> f64;
    /// `y += alpha * a_h`
    fn axpy_col(&self, h: usize, alpha: f64, y: &mut [f64]);

    fn col_into(&self, h: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.axpy_col(h, 1.0, out);
    }

    /// `A x`
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        for (h, &v) in x.iter().enumerate() {
            if v != 0.0 {
                self.axpy_col(h, v, &mut y);
            }
        }
        y
    }
}

impl ColumnOperator for RationalMatrix {
    fn n_rows(&self) -> usize {
        RationalMatrix::n_rows(self)
    }
    fn n_cols(&self) -> usize {
        RationalMatrix::n_cols(self)
    }
    fn col_dot(&self, h: usize, v: &[f64]) -> f64 {
        self.column_rows(h).map(|r| v[r]).sum()
    }
    fn axpy_col(&self, h: usize, alpha: f64, y: &mut [f64]) {
        for r in self.column_rows(h) {
            y[r] += alpha;
        }
    }
}

impl ColumnOperator for DMatrix<f64> {
    fn n_rows(&self) -> usize {
        self.nrows()
    }
    fn n_cols(&self) -> usize {
        self.ncols()
    }
    fn col_dot(&self, h: usize, v: &[f64]) -> f64 {
        self.column(h).iter().zip(v).map(|(a, b)| a * b).sum()
    }
    fn axpy_col(&self, h: usize, alpha: f64, y: &mut [f64]) {
        for (yi, a) in y.iter_mut().zip(self.column(h).iter()) {
            *yi += alpha * a;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Weights on the columns, each at least the lower bound.
    pub nu: Vec<f64>,
    /// `A nu`, the closest point of the (tightened) cone.
    pub eta: Vec<f64>,
    /// Weighted squared distance from the target to `eta`.
    pub objective: f64,
    pub iterations: usize,
    /// Largest violation of the optimality conditions.
    pub kkt_residual: f64,
}

/// Minimize `(target - A nu)' diag(w) (target - A nu)` over `nu >= lower`.
///
/// Solved as nonnegative least squares in `mu = nu - lower` against the shifted
/// target `target - lower * A 1`.
pub fn project<A: ColumnOperator + ?Sized>(a: &A, target: &[f64], w: &[f64], lower: f64) -> Result<Projection> {
    let (i, h) = (a.n_rows(), a.n_cols());
    if target.len() != i || w.len() != i {
        return Err(Error::Validation(format!(
            "dimension mismatch: A has {i} rows, target {} and weights {}",
            target.len(),
            w.len()
        )));
    }
    if h == 0 {
        return Err(Error::Validation("A has no columns".into()));
    }
    if !(lower >= 0.0) || !lower.is_finite() {
        return Err(Error::Validation(format!("lower bound must be nonnegative, got {lower}")));
    }
    let mut shifted = target.to_vec();
    if lower > 0.0 {
        for c in 0..h {
            a.axpy_col(c, -lower, &mut shifted);
        }
    }
    let mut sol = nnls(a, &shifted, w, h >= WARM_START_MIN_COLS)?;
    for v in sol.nu.iter_mut() {
        *v += lower;
    }
    let eta = a.apply(&sol.nu);
    let objective = weighted_sq_dist(target, &eta, w);
    sol.objective = if objective <= ZERO_OBJECTIVE { 0.0 } else { objective };
    sol.eta = eta;
    Ok(sol)
}

fn weighted_sq_dist(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(y).zip(w).map(|((a, b), c)| c * (a - b) * (a - b)).sum()
}

/// `g = A' W (b - A x)`; the gradient of the objective is `-2 g`.
fn dual<A: ColumnOperator + ?Sized>(a: &A, resid_w: &[f64]) -> Vec<f64> {
    (0..a.n_cols()).map(|c| a.col_dot(c, resid_w)).collect()
}

fn weighted_residual<A: ColumnOperator + ?Sized>(a: &A, b: &[f64], w: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.apply(x);
    b.iter().zip(&ax).zip(w).map(|((bi, axi), wi)| wi * (bi - axi)).collect()
}

/// Unconstrained weighted least squares on the columns in `set`.
fn solve_passive<A: ColumnOperator + ?Sized>(a: &A, b: &[f64], w: &[f64], set: &[usize]) -> Vec<f64> {
    let i = a.n_rows();
    let k = set.len();
    let mut cols = vec![vec![0.0; i]; k];
    for (c, &h) in set.iter().enumerate() {
        a.col_into(h, &mut cols[c]);
    }
    let mut g = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for p in 0..k {
        let wp: Vec<f64> = cols[p].iter().zip(w).map(|(x, y)| x * y).collect();
        rhs[p] = wp.iter().zip(b).map(|(x, y)| x * y).sum();
        for q in p..k {
            let v: f64 = wp.iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
            g[(p, q)] = v;
            g[(q, p)] = v;
        }
    }
    solve_spd(&g, &rhs).iter().copied().collect()
}

pub(crate) fn nnls<A: ColumnOperator + ?Sized>(a: &A, b: &[f64], w: &[f64], warm: bool) -> Result<Projection> {
    let h = a.n_cols();
    let cap = 50 * h.max(1) + 100;
    let mut x = vec![0.0; h];
    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; h];
    let mut iterations = 0usize;

    if warm {
        passive = warm_start_support(a, b, w);
        loop {
            if passive.is_empty() {
                break;
            }
            let z = solve_passive(a, b, w, &passive);
            if z.iter().all(|&v| v > 0.0) {
                for (&p, &v) in passive.iter().zip(&z) {
                    x[p] = v;
                }
                break;
            }
            passive = passive.iter().zip(&z).filter(|(_, &v)| v > 0.0).map(|(&p, _)| p).collect();
        }
        for &p in &passive {
            in_passive[p] = true;
        }
    }

    let tol = DUAL_TOL;
    let mut g;
    loop {
        let r = weighted_residual(a, b, w, &x);
        g = dual(a, &r);
        let mut best: Option<usize> = None;
        for c in 0..h {
            if !in_passive[c] && g[c] > tol && best.is_none_or(|bi| g[c] > g[bi]) {
                best = Some(c);
            }
        }
        let Some(enter) = best else { break };
        iterations += 1;
        if iterations > cap {
            return Err(failure(a, b, w, &x, &g, "iteration cap reached"));
        }
        passive.push(enter);
        in_passive[enter] = true;
        loop {
            let z = solve_passive(a, b, w, &passive);
            if z.iter().all(|&v| v > 0.0) {
                for (&p, &v) in passive.iter().zip(&z) {
                    x[p] = v;
                }
                break;
            }
            iterations += 1;
            if iterations > cap {
                return Err(failure(a, b, w, &x, &g, "iteration cap reached"));
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = usize::MAX;
            for (&p, &v) in passive.iter().zip(&z) {
                if v <= 0.0 {
                    let step = x[p] / (x[p] - v);
                    if step < alpha {
                        alpha = step;
                        blocking = p;
                    }
                }
            }
            for (&p, &v) in passive.iter().zip(&z) {
                x[p] += alpha * (v - x[p]);
            }
            x[blocking] = 0.0;
            passive.retain(|&p| {
                let keep = x[p] > 1e-15;
                if !keep {
                    x[p] = 0.0;
                    in_passive[p] = false;
                }
                keep
            });
        }
    }
    let r = weighted_residual(a, b, w, &x);
    let g = dual(a, &r);
    let kkt = kkt_residual(&x, &g);
    let ax = a.apply(&x);
    Ok(Projection { objective: weighted_sq_dist(b, &ax, w), nu: x, eta: ax, iterations, kkt_residual: kkt })
}

/// Largest of `max(0, -grad_h)` and `|nu_h grad_h|`, with `grad = -2 g`.
fn kkt_residual(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let grad = -2.0 * gi;
            (-grad).max(0.0).max((xi * grad).abs())
        })
        .fold(0.0, f64::max)
}

fn failure<A: ColumnOperator + ?Sized>(a: &A, b: &[f64], w: &[f64], x: &[f64], g: &[f64], msg: &str) -> Error {
    let ax = a.apply(x);
    Error::Solver { message: msg.into(), objective: weighted_sq_dist(b, &ax, w), kkt: kkt_residual(x, g) }
}

/// Projected gradient descent; returns the largest entries of the iterate, at most
/// as many as there are rows.
fn warm_start_support<A: ColumnOperator + ?Sized>(a: &A, b: &[f64], w: &[f64]) -> Vec<usize> {
    let (i, h) = (a.n_rows(), a.n_cols());
    // Power iteration for the largest eigenvalue of A' W A.
    let mut v = vec![1.0 / (h as f64).sqrt(); h];
    let mut lip = 1.0;
    for _ in 0..30 {
        let av = a.apply(&v);
        let wav: Vec<f64> = av.iter().zip(w).map(|(x, y)| x * y).collect();
        let u = dual(a, &wav);
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm;
        v = u.into_iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / lip;
    let mut x = vec![0.0; h];
    for _ in 0..200 {
        let r = weighted_residual(a, b, w, &x);
        let g = dual(a, &r);
        for c in 0..h {
            x[c] = (x[c] + step * g[c]).max(0.0);
        }
    }
    let mut idx: Vec<usize> = (0..h).filter(|&c| x[c] > 0.0).collect();
    idx.sort_by(|&p, &q| x[q].total_cmp(&x[p]).then(p.cmp(&q)));
    idx.truncate(i);
    idx.sort_unstable();
    idx
}
