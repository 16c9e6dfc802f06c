//! Bootstrap critical values for the cone-distance statistic.
//!
//! Each replication draws an estimate, recenters it at the tightened projection
//! `eta_tau`, and projects it onto the tightened cone `{A nu : nu >= tau / H}`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::Serialize;

use super::{nnls_project, project, PiVector, Weighting};
use crate::enumerate::RationalMatrix;
use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::rng::{stream, Purpose};

/// Replications may fail at most this often before the run is aborted.
pub const MAX_FAILURE_SHARE: f64 = 0.01;

/// Source of bootstrap draws of the estimated probability vector.
pub trait Resampler: Sync {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

/// Multinomial resampling within each budget, for frequency estimates.
#[derive(Debug, Clone)]
pub struct MultinomialResampler {
    pi: PiVector,
}

impl MultinomialResampler {
    pub fn new(pi: &PiVector) -> Result<Self> {
        if let Some(j) = pi.sample_sizes().iter().position(|&n| n == 0) {
            return validation(format!("budget {} has no observations", j + 1));
        }
        Ok(MultinomialResampler { pi: pi.clone() })
    }
}

impl Resampler for MultinomialResampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.pi.values().len());
        for (j, &n) in self.pi.sample_sizes().iter().enumerate() {
            let mut left = n as u64;
            let mut mass = 1.0;
            let block = self.pi.block(j);
            for (i, &p) in block.iter().enumerate() {
                let k = if i + 1 == block.len() || left == 0 {
                    left
                } else {
                    let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
                    Binomial::new(left, q).map_err(|e| Error::Internal(e.to_string()))?.sample(rng)
                };
                out.push(k as f64 / n as f64);
                left -= k;
                mass -= p;
            }
        }
        Ok(out)
    }
}

/// Normal draws `pi + N_j^{-1/2} v_j^{1/2} z` per budget.
#[derive(Debug, Clone)]
pub struct GaussianResampler {
    pi: PiVector,
    roots: Vec<DMatrix<f64>>,
}

impl GaussianResampler {
    /// `variances[j]` is the asymptotic covariance of block `j`; it must be symmetric
    /// positive semidefinite.
    pub fn new(pi: &PiVector, variances: &[DMatrix<f64>]) -> Result<Self> {
        if variances.len() != pi.block_sizes().len() {
            return validation("need one covariance matrix per budget");
        }
        let mut roots = Vec::with_capacity(variances.len());
        for (j, v) in variances.iter().enumerate() {
            let n = pi.block_sizes()[j];
            if v.nrows() != n || v.ncols() != n {
                return validation(format!("covariance of budget {} must be {n}x{n}", j + 1));
            }
            if pi.sample_sizes()[j] == 0 {
                return validation(format!("budget {} has no observations", j + 1));
            }
            let eig = SymmetricEigen::new((v + v.transpose()) * 0.5);
            let scale = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            if eig.eigenvalues.iter().any(|&l| l < -1e-8 * scale) {
                return validation(format!("covariance of budget {} is not positive semidefinite", j + 1));
            }
            let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
            let root = &eig.eigenvectors * sqrt_l / (pi.sample_sizes()[j] as f64).sqrt();
            roots.push(root);
        }
        Ok(GaussianResampler { pi: pi.clone(), roots })
    }
}

impl Resampler for GaussianResampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let mut out = self.pi.values().to_vec();
        let mut off = 0;
        for root in &self.roots {
            let n = root.nrows();
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            for r in 0..n {
                out[off + r] += (0..n).map(|c| root[(r, c)] * z[c]).sum::<f64>();
            }
            off += n;
        }
        Ok(out)
    }
}

/// Any closure, for example re-running an estimator on resampled observations.
pub struct FnResampler<F>(pub F);

impl<F> Resampler for FnResampler<F>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        (self.0)(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub tau: f64,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub exec: Execution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Active-set iterations over all projections.
    pub solver_iterations: usize,
    pub max_kkt_residual: f64,
    pub failed_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    #[serde(rename = "J_N")]
    pub j_n: f64,
    pub tau: f64,
    #[serde(rename = "R")]
    pub reps: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub eta_hat: Vec<f64>,
    pub eta_tight: Vec<f64>,
    #[serde(skip)]
    pub boot_stats: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// `draw - pihat + eta_tau`
pub fn recentered_draw(draw: &[f64], pihat: &[f64], eta_tau: &[f64]) -> Vec<f64> {
    draw.iter().zip(pihat).zip(eta_tau).map(|((d, p), e)| d - p + e).collect()
}

/// The `ceil((1 - alpha) R)`-th smallest value.
pub fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let r = sorted.len();
    let k = (((1.0 - alpha) * r as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(r) - 1]
}

pub fn bootstrap_test(
    pihat: &PiVector,
    a: &RationalMatrix,
    om: &Weighting,
    resampler: &dyn Resampler,
    cfg: &BootstrapConfig,
) -> Result<TestResult> {
    if cfg.reps == 0 {
        return validation("the number of bootstrap replications must be positive");
    }
    if !(0.0..=0.5).contains(&cfg.alpha) {
        return validation(format!("alpha must lie in [0, 0.5], got {}", cfg.alpha));
    }
    if !(cfg.tau >= 0.0) || !cfg.tau.is_finite() {
        return validation(format!("tau must be nonnegative, got {}", cfg.tau));
    }
    if let Some(j) = pihat.sample_sizes().iter().position(|&n| n == 0) {
        return validation(format!("budget {} has no observations", j + 1));
    }
    let n = pihat.total_n() as f64;
    let lower = cfg.tau / a.n_cols() as f64;
    let plain = nnls_project(pihat, a, om, 0.0)?;
    let tight = nnls_project(pihat, a, om, lower)?;
    let j_n = n * plain.objective;

    let reps = cfg.exec.map_range(cfg.reps, |r| -> Result<Option<(f64, usize, f64)>> {
        let mut rng = stream(cfg.seed, Purpose::Bootstrap, r as u64);
        let draw = match resampler.draw(&mut rng) {
            Ok(d) => d,
            Err(Error::Solver { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if draw.len() != pihat.values().len() {
            return Err(Error::Internal("resampler returned a vector of the wrong length".into()));
        }
        let target = recentered_draw(&draw, pihat.values(), &tight.eta);
        match project(a, &target, om.diag(), lower) {
            Ok(p) => Ok(Some((n * p.objective, p.iterations, p.kkt_residual))),
            Err(Error::Solver { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });

    let mut diag = Diagnostics {
        solver_iterations: plain.iterations + tight.iterations,
        max_kkt_residual: plain.kkt_residual.max(tight.kkt_residual),
        failed_replications: 0,
    };
    let mut stats = Vec::with_capacity(cfg.reps);
    for r in reps {
        match r? {
            Some((s, it, kkt)) => {
                stats.push(s);
                diag.solver_iterations += it;
                diag.max_kkt_residual = diag.max_kkt_residual.max(kkt);
            }
            None => diag.failed_replications += 1,
        }
    }
    if diag.failed_replications as f64 > MAX_FAILURE_SHARE * cfg.reps as f64 || stats.is_empty() {
        return Err(Error::Solver {
            message: format!("{} of {} bootstrap projections failed", diag.failed_replications, cfg.reps),
            objective: plain.objective,
            kkt: diag.max_kkt_residual,
        });
    }
    let mut sorted = stats.clone();
    sorted.sort_by(f64::total_cmp);
    let critical_value = upper_quantile(&sorted, cfg.alpha);
    let exceed = stats.iter().filter(|&&s| s >= j_n).count();
    let p_value = (1 + exceed) as f64 / (stats.len() + 1) as f64;
    Ok(TestResult {
        j_n,
        tau: cfg.tau,
        reps: stats.len(),
        alpha: cfg.alpha,
        critical_value,
        p_value,
        reject: j_n > critical_value,
        eta_hat: plain.eta,
        eta_tight: tight.eta,
        boot_stats: stats,
        diagnostics: diag,
    })
}
