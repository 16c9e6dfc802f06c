//! Per-period estimators. Everything here works on one budget's observations.

use nalgebra::DMatrix;
use rand::Rng;

use super::basis::{power_into, BasisKind, SeriesBasis};
use super::data::ClassifiedPeriod;
use super::SeriesSpec;
use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::linalg::{gauss_legendre_unit, generalized_inverse};
use crate::rng::{stream, Purpose};

/// Patch probabilities for one period and their asymptotic covariance.
pub(crate) type PeriodEstimate = (Vec<f64>, DMatrix<f64>);

fn check_nonempty(cp: &ClassifiedPeriod, j: usize) -> Result<()> {
    if cp.is_empty() {
        return validation(format!("period {} has no observations", j + 1));
    }
    Ok(())
}

/// `diag(p) - p p'`.
pub(crate) fn multinomial_cov(p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    DMatrix::from_fn(n, n, |i, k| if i == k { p[i] - p[i] * p[i] } else { -p[i] * p[k] })
}

pub(crate) fn freq_period(cp: &ClassifiedPeriod, j: usize) -> Result<PeriodEstimate> {
    check_nonempty(cp, j)?;
    let mut counts = vec![0usize; cp.n_patches];
    for &i in &cp.patch {
        counts[i] += 1;
    }
    let n = cp.len() as f64;
    let pi: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let v = multinomial_cov(&pi);
    Ok((pi, v))
}

/// Least-squares projection of patch indicators on the rows of `x`, evaluated at
/// `at`.
struct Projection {
    /// `Q^- at`.
    h: Vec<f64>,
    /// Per patch, `sum_n x_n d_in / N`.
    b: Vec<Vec<f64>>,
    qinv: DMatrix<f64>,
}

impl Projection {
    fn fit(x: &[f64], m: usize, patch: &[usize], n_patches: usize, at: &[f64]) -> Result<Self> {
        let n = patch.len();
        let nf = n as f64;
        let mut q = DMatrix::<f64>::zeros(m, m);
        let mut b = vec![vec![0.0; m]; n_patches];
        for (row, &i) in x.chunks_exact(m).zip(patch) {
            for r in 0..m {
                for c in r..m {
                    q[(r, c)] += row[r] * row[c];
                }
                b[i][r] += row[r];
            }
        }
        for r in 0..m {
            for c in r..m {
                q[(r, c)] /= nf;
                q[(c, r)] = q[(r, c)];
            }
        }
        for bi in &mut b {
            for v in bi.iter_mut() {
                *v /= nf;
            }
        }
        let qinv = generalized_inverse(&q);
        let h: Vec<f64> = (0..m).map(|r| (0..m).fold(0.0, |s, c| s + qinv[(r, c)] * at[c])).collect();
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver {
                message: "series design matrix could not be inverted".into(),
                objective: f64::NAN,
                kkt: f64::NAN,
            });
        }
        Ok(Projection { h, b, qinv })
    }

    fn pi(&self) -> Vec<f64> {
        self.b.iter().map(|bi| bi.iter().zip(&self.h).fold(0.0, |s, (a, c)| s + c * a).clamp(0.0, 1.0)).collect()
    }

    /// `(1/N) sum_n Sigma(p(x_n)) (x_n'h)^2` with `p(x)` the fitted probabilities,
    /// clamped and renormalized.
    fn variance(&self, x: &[f64], m: usize) -> DMatrix<f64> {
        let ip = self.b.len();
        let beta: Vec<Vec<f64>> = self
            .b
            .iter()
            .map(|bi| (0..m).map(|r| (0..m).fold(0.0, |s, c| s + self.qinv[(r, c)] * bi[c])).collect())
            .collect();
        let mut v = DMatrix::<f64>::zeros(ip, ip);
        let mut p = vec![0.0; ip];
        let mut rows = 0usize;
        for row in x.chunks_exact(m) {
            rows += 1;
            let g: f64 = row.iter().zip(&self.h).map(|(a, c)| a * c).sum();
            let g2 = g * g;
            if g2 == 0.0 {
                continue;
            }
            for (pi, bi) in p.iter_mut().zip(&beta) {
                *pi = row.iter().zip(bi).map(|(a, c)| a * c).sum::<f64>().clamp(0.0, 1.0);
            }
            let total: f64 = p.iter().sum();
            if total > 0.0 {
                p.iter_mut().for_each(|v| *v /= total);
            }
            for i in 0..ip {
                v[(i, i)] += g2 * p[i];
                for k in 0..ip {
                    v[(i, k)] -= g2 * p[i] * p[k];
                }
            }
        }
        v / rows as f64
    }
}

fn check_order(order: usize, n: usize, j: usize) -> Result<()> {
    if order == 0 {
        return validation("basis order must be at least 1");
    }
    if order > n {
        return validation(format!("period {}: {order} basis functions but only {n} observations", j + 1));
    }
    Ok(())
}

pub(crate) fn series_period(
    cp: &ClassifiedPeriod,
    kind: BasisKind,
    order: usize,
    target: f64,
    j: usize,
) -> Result<PeriodEstimate> {
    check_nonempty(cp, j)?;
    check_order(order, cp.len(), j)?;
    let basis = SeriesBasis::fit(kind, order, &cp.w)?;
    let mut x = vec![0.0; cp.len() * order];
    for (row, &w) in x.chunks_exact_mut(order).zip(&cp.w) {
        basis.eval_into(w, row);
    }
    let fit = Projection::fit(&x, order, &cp.patch, cp.n_patches, &basis.eval(target))?;
    Ok((fit.pi(), fit.variance(&x, order)))
}

/// Smooth trimming onto `[0, 1]`: zero below `-u`, one above `1 + u`, the identity
/// on `[u, 1 - u]`, and quadratic blends in between.
pub fn trim(e: f64, u: f64) -> f64 {
    let blend = |x: f64| (x + u) * (x + u) / (4.0 * u);
    if e < -u {
        0.0
    } else if e < u {
        blend(e)
    } else if e <= 1.0 - u {
        e
    } else if e <= 1.0 + u {
        1.0 - blend(1.0 - e)
    } else {
        1.0
    }
}

/// Default trimming bandwidth `(L / N)^(1/3)`, kept below one half.
pub fn default_trimming(instrument_order: usize, n: usize) -> f64 {
    (instrument_order as f64 / n as f64).cbrt().min(MAX_DEFAULT_TRIMMING)
}

/// Upper limit on the data-driven trimming bandwidth for small samples.
pub const MAX_DEFAULT_TRIMMING: f64 = 0.45;

/// First step: the estimated conditional CDF of `w` given `z` at each observation,
/// before trimming.
pub(crate) fn control_variable(w: &[f64], z: &[f64], instrument_order: usize) -> Result<Vec<f64>> {
    let n = w.len();
    let l = instrument_order;
    let zb = SeriesBasis::fit(BasisKind::Power, l, z)?;
    let r: Vec<f64> = z.iter().flat_map(|&v| zb.eval(v)).collect();
    let mut rm = DMatrix::<f64>::zeros(l, l);
    for row in r.chunks_exact(l) {
        for a in 0..l {
            for c in 0..l {
                rm[(a, c)] += row[a] * row[c];
            }
        }
    }
    rm /= n as f64;
    let rinv = generalized_inverse(&rm);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
    let mut prefix = vec![0.0; l];
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && w[order[end]] == w[order[start]] {
            for (p, v) in prefix.iter_mut().zip(&r[order[end] * l..(order[end] + 1) * l]) {
                *p += v;
            }
            end += 1;
        }
        for &idx in &order[start..end] {
            let row = &r[idx * l..(idx + 1) * l];
            let mut f = 0.0;
            for a in 0..l {
                let u: f64 = (0..l).map(|c| rinv[(a, c)] * prefix[c]).sum();
                f += row[a] * u;
            }
            out[idx] = f / n as f64;
        }
        start = end;
    }
    Ok(out)
}

/// Tensor basis in `w` and the control variable.
struct ControlBasis {
    w: SeriesBasis,
    eps_order: usize,
}

impl ControlBasis {
    fn dim(&self) -> usize {
        self.w.order() * self.eps_order
    }

    fn eval_into(&self, w: f64, eps: f64, out: &mut [f64]) {
        let wv = self.w.eval(w);
        let mut ev = vec![0.0; self.eps_order];
        power_into(2.0 * eps - 1.0, &mut ev);
        for (a, wa) in wv.iter().enumerate() {
            for (b, eb) in ev.iter().enumerate() {
                out[a * self.eps_order + b] = wa * eb;
            }
        }
    }
}

/// Point estimate of the control-function estimator for one period.
pub(crate) fn cf_point(
    cp: &ClassifiedPeriod,
    spec: &SeriesSpec,
    order: usize,
    target: f64,
    j: usize,
) -> Result<Vec<f64>> {
    check_nonempty(cp, j)?;
    let z = cp.z.as_ref().ok_or_else(|| {
        Error::Validation(format!("period {}: control-function estimator needs an instrument column z", j + 1))
    })?;
    let (lo, hi) = cp.w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return validation(format!("period {}: w is constant, so its conditional CDF is degenerate", j + 1));
    }
    if spec.control_order == 0 || spec.instrument_order == 0 || spec.quadrature_nodes == 0 {
        return validation("instrument order, control order and quadrature nodes must be at least 1");
    }
    let (zlo, zhi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if spec.instrument_order == 1 || !(zhi > zlo) {
        // The control variable would be the empirical CDF of w, a function of w
        // alone, so conditioning on it adds nothing.
        return Ok(series_period(cp, spec.basis, order, target, j)?.0);
    }
    let n = cp.len();
    let upsilon = match spec.trimming {
        Some(u) => u,
        None => default_trimming(spec.instrument_order, n),
    };
    if !(upsilon > 0.0 && upsilon < 0.5) {
        return validation(format!("trimming bandwidth must lie in (0, 1/2), got {upsilon}"));
    }
    let eps: Vec<f64> =
        control_variable(&cp.w, z, spec.instrument_order)?.into_iter().map(|e| trim(e, upsilon)).collect();

    let cb = ControlBasis { w: SeriesBasis::fit(spec.basis, order, &cp.w)?, eps_order: spec.control_order };
    let m = cb.dim();
    check_order(m, n, j)?;
    let mut x = vec![0.0; n * m];
    for ((row, &w), &e) in x.chunks_exact_mut(m).zip(&cp.w).zip(&eps) {
        cb.eval_into(w, e, row);
    }
    let (nodes, weights) = gauss_legendre_unit(spec.quadrature_nodes);
    let mut d = vec![0.0; m];
    let mut s = vec![0.0; m];
    for (&e, &wt) in nodes.iter().zip(&weights) {
        cb.eval_into(target, e, &mut s);
        for (di, si) in d.iter_mut().zip(&s) {
            *di += wt * si;
        }
    }
    Ok(Projection::fit(&x, m, &cp.patch, cp.n_patches, &d)?.pi())
}

/// Control-function estimate with a pairs-bootstrap covariance, scaled by `N_j`.
pub(crate) fn cf_period(
    cp: &ClassifiedPeriod,
    spec: &SeriesSpec,
    order: usize,
    target: f64,
    j: usize,
    exec: Execution,
) -> Result<PeriodEstimate> {
    let pi = cf_point(cp, spec, order, target, j)?;
    let reps = spec.variance_reps;
    if reps < 2 {
        return validation("need at least 2 replications for the control-function variance");
    }
    let n = cp.len();
    let draws = exec.map_range(reps, |b| {
        let mut rng = stream(spec.seed, Purpose::Resample, ((j as u64) << 32) | b as u64);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        cf_point(&cp.select(&idx), spec, order, target, j)
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
    let ip = pi.len();
    let mean: Vec<f64> = (0..ip).map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / reps as f64).collect();
    let mut v = DMatrix::<f64>::zeros(ip, ip);
    for d in &draws {
        for i in 0..ip {
            for k in 0..ip {
                v[(i, k)] += (d[i] - mean[i]) * (d[k] - mean[k]);
            }
        }
    }
    v *= n as f64 / (reps - 1) as f64;
    Ok((pi, v))
}
