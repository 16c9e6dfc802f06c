//! Synthetic cross-sections for validation and Monte Carlo work.

#[cfg(test)]
mod tests;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::enumerate::{crawl_a, RationalMatrix};
use crate::error::{validation, Error, Result};
use crate::estimate::{Choices, Microdata, PeriodData};
use crate::exec::Execution;
use crate::geometry::{enumerate_patches, two_crossing_budgets, BudgetSystem, PatchTable, DEFAULT_GEOMETRY_TOL};
use crate::revpref::Axiom;
use crate::rng::{stream, Purpose};

/// A population of rational types mixed with weights `nu`.
#[derive(Debug, Clone)]
pub struct MixtureDgp<'a> {
    a: &'a RationalMatrix,
    nu: Vec<f64>,
    sample_sizes: Vec<usize>,
    seed: u64,
}

impl<'a> MixtureDgp<'a> {
    /// `nu` is rescaled to sum to one.
    pub fn new(a: &'a RationalMatrix, nu: &[f64], sample_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        if nu.len() != a.n_cols() {
            return validation(format!("{} weights for {} types", nu.len(), a.n_cols()));
        }
        if nu.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return validation("type weights must be finite and nonnegative");
        }
        let total: f64 = nu.iter().sum();
        if !(total > 0.0) {
            return validation("type weights sum to zero");
        }
        if sample_sizes.len() != a.n_budgets() {
            return validation(format!("{} sample sizes for {} budgets", sample_sizes.len(), a.n_budgets()));
        }
        Ok(MixtureDgp { a, nu: nu.iter().map(|v| v / total).collect(), sample_sizes, seed })
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// `A nu`, the probabilities the sample frequencies converge to.
    pub fn implied_pi(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.a.n_rows()];
        for (h, w) in self.nu.iter().enumerate() {
            for r in self.a.column_rows(h) {
                pi[r] += w;
            }
        }
        pi
    }
}

/// Each budget gets its own sample: draw a type, record its patch. Log expenditure
/// is zero throughout.
pub fn sample_mixture(dgp: &MixtureDgp, exec: Execution) -> Result<Microdata> {
    let dist = WeightedIndex::new(&dgp.nu).map_err(|e| Error::Validation(e.to_string()))?;
    let periods = exec.map_range(dgp.a.n_budgets(), |j| {
        let mut rng = stream(dgp.seed, Purpose::Simulate, j as u64);
        let n = dgp.sample_sizes[j];
        let patches = (0..n).map(|_| dgp.a.column(dist.sample(&mut rng))[j] as usize).collect();
        PeriodData { choices: Choices::Patches(patches), w: vec![0.0; n], z: None }
    });
    Ok(Microdata { periods })
}

/// Patches and rational types of the two crossing budget lines.
pub fn crossing_model() -> Result<(PatchTable, RationalMatrix)> {
    let t = enumerate_patches(&two_crossing_budgets(), true, DEFAULT_GEOMETRY_TOL, Execution::Sequential)?;
    let a = crawl_a(&t, Axiom::Sarp, Execution::Sequential)?;
    Ok((t, a))
}

/// Weights on the crossing model's three types, given as (below the other line on
/// budget 1 only, on budget 2 only, on neither). Choosing the below patch on both
/// budgets is the one irrational pattern.
pub fn crossing_weights(a: &RationalMatrix, weights: [f64; 3]) -> Result<Vec<f64>> {
    let below = 0u32;
    let mut nu = vec![0.0; a.n_cols()];
    for (h, nu_h) in nu.iter_mut().enumerate() {
        let c = a.column(h);
        *nu_h = match (c[0] == below, c[1] == below) {
            (true, false) => weights[0],
            (false, true) => weights[1],
            (false, false) => weights[2],
            (true, true) => return Err(Error::Internal("irrational type in the crossing model".into())),
        };
    }
    Ok(nu)
}

/// Crossing model with no type that avoids both below patches, so the
/// probabilities sit on the boundary of the cone: `pi = (1/2, 1/2, 1/2, 1/2)`.
pub fn boundary_dgp_example1(n: usize, seed: u64, exec: Execution) -> Result<Microdata> {
    let (_, a) = crossing_model()?;
    let nu = crossing_weights(&a, [0.5, 0.5, 0.0])?;
    sample_mixture(&MixtureDgp::new(&a, &nu, vec![n, n], seed)?, exec)
}

/// How Cobb-Douglas budget shares are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preferences {
    /// Every consumer has the same shares.
    Fixed(Vec<f64>),
    /// Shares from a Dirichlet law with these concentrations.
    Dirichlet(Vec<f64>),
    /// Two goods; the first share is `lambda * eps + (1 - lambda) * u` where `eps` is
    /// the consumer's taste shock and `u` is independent uniform noise.
    LinkedShare { lambda: f64 },
}

/// Log expenditure on `[lo, hi]`, an increasing function of a shock `eps` given the
/// instrument `z`. When `endogenous`, the same shock enters preferences; otherwise
/// preferences draw their own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpenditureLaw {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub endogenous: bool,
}

impl ExpenditureLaw {
    /// Position in `[0, 1]` of `w` given `(z, eps)`. The conditional CDF of that
    /// position is `(1 - z) t + z t^2`, so `eps` is exactly the control variable.
    pub fn position(z: f64, eps: f64) -> f64 {
        if z < 1e-12 {
            return eps;
        }
        let b = 1.0 - z;
        (-b + (b * b + 4.0 * z * eps).sqrt()) / (2.0 * z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CobbDouglasDgp {
    /// Normalized budgets.
    pub budgets: BudgetSystem,
    /// Log expenditure at which each budget was normalized.
    pub targets: Vec<f64>,
    pub preferences: Preferences,
    pub expenditure: ExpenditureLaw,
    pub sample_sizes: Vec<usize>,
    pub seed: u64,
}

impl CobbDouglasDgp {
    fn validate(&self) -> Result<()> {
        let (j, k) = (self.budgets.len(), self.budgets.goods());
        if self.targets.len() != j || self.sample_sizes.len() != j {
            return validation("need one target and one sample size per budget");
        }
        let e = &self.expenditure;
        if !(e.lo.is_finite() && e.hi.is_finite() && e.lo <= e.hi) {
            return validation("expenditure range must be finite with lo <= hi");
        }
        match &self.preferences {
            Preferences::Fixed(a) => {
                if a.len() != k || a.iter().any(|v| !(*v > 0.0)) {
                    return validation(format!("fixed shares need {k} positive entries"));
                }
            }
            Preferences::Dirichlet(c) => {
                if c.len() != k || c.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return validation(format!("Dirichlet law needs {k} positive concentrations"));
                }
            }
            Preferences::LinkedShare { lambda } => {
                if k != 2 {
                    return validation("linked shares are defined for two goods");
                }
                if !(0.0..=1.0).contains(lambda) {
                    return validation("lambda must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    fn shares(&self, eps: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.preferences {
            Preferences::Fixed(a) => {
                let s: f64 = a.iter().sum();
                a.iter().map(|v| v / s).collect()
            }
            Preferences::Dirichlet(c) => {
                let g: Vec<f64> = c.iter().map(|&k| Gamma::new(k, 1.0).expect("positive shape").sample(rng)).collect();
                let s: f64 = g.iter().sum();
                g.iter().map(|v| v / s).collect()
            }
            Preferences::LinkedShare { lambda } => {
                let a1 = lambda * eps + (1.0 - lambda) * rng.random::<f64>();
                vec![a1, 1.0 - a1]
            }
        }
    }
}

/// Consumers with Cobb-Douglas utility, so every cross-section is rational. Each
/// consumer spends `exp(w)`; bundles are in the units of the original prices.
pub fn cobb_douglas_population(dgp: &CobbDouglasDgp, exec: Execution) -> Result<Microdata> {
    dgp.validate()?;
    let periods = exec.map_range(dgp.budgets.len(), |j| {
        let mut rng = stream(dgp.seed, Purpose::Simulate, j as u64);
        let price = dgp.budgets.price(j);
        let e = dgp.expenditure;
        let n = dgp.sample_sizes[j];
        let (mut bundles, mut ws, mut zs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let z: f64 = rng.random();
            let eps: f64 = rng.random();
            let w = e.lo + (e.hi - e.lo) * ExpenditureLaw::position(z, eps);
            let taste = if e.endogenous { eps } else { rng.random() };
            let scale = (w - dgp.targets[j]).exp();
            let alpha = dgp.shares(taste, &mut rng);
            bundles.push(alpha.iter().zip(price).map(|(a, p)| scale * a / p).collect());
            ws.push(w);
            zs.push(z);
        }
        PeriodData { choices: Choices::Bundles(bundles), w: ws, z: Some(zs) }
    });
    Ok(Microdata { periods })
}
