//! Estimators of patch probabilities from repeated cross-sections.
//!
//! Three estimators are available: raw within-budget frequencies, a series
//! regression of patch indicators on log expenditure evaluated at a target
//! expenditure, and a two-step control-function estimator that corrects for
//! endogenous expenditure using an instrument.

mod basis;
mod data;
mod fit;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use basis::{power_into, BasisKind, SeriesBasis};
pub use data::{
    classify, read_microdata_csv, write_microdata_csv, Choices, ClassifiedPeriod, Microdata, PeriodData,
    EXPENDITURE_TOL,
};
pub use fit::{default_trimming, trim, MAX_DEFAULT_TRIMMING};

use crate::conetest::{effective_n_smoothed, PiVector, Resampler};
use crate::error::{validation, Result};
use crate::exec::Execution;
use crate::geometry::PatchTable;

/// Tolerance for bundles that sit exactly on another budget's hyperplane.
pub const TIE_TOL: f64 = crate::geometry::DEFAULT_TIE_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Freq,
    Series,
    Cf,
}

impl std::str::FromStr for Estimator {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "freq" | "frequency" => Ok(Estimator::Freq),
            "series" => Ok(Estimator::Series),
            "cf" | "control-function" => Ok(Estimator::Cf),
            other => validation(format!("unknown estimator {other:?}; expected freq, series or cf")),
        }
    }
}

/// Settings of the smoothed estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesSpec {
    pub basis: BasisKind,
    /// Number of basis functions in `w`.
    pub order: usize,
    /// Per-period override of `order`.
    pub period_orders: Option<Vec<usize>>,
    /// Log expenditure at which each period's probabilities are evaluated. Defaults
    /// to the period's median `w`.
    pub targets: Option<Vec<f64>>,
    /// Trimming bandwidth for the control variable. Defaults to `(L / N_j)^(1/3)`.
    pub trimming: Option<f64>,
    /// Number of first-step basis functions in the instrument.
    pub instrument_order: usize,
    /// Number of second-step basis functions in the control variable.
    pub control_order: usize,
    pub quadrature_nodes: usize,
    /// Pairs-bootstrap replications for the control-function covariance.
    pub variance_reps: usize,
    pub seed: u64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        SeriesSpec {
            basis: BasisKind::Power,
            order: 3,
            period_orders: None,
            targets: None,
            trimming: None,
            instrument_order: 3,
            control_order: 3,
            quadrature_nodes: 32,
            variance_reps: 200,
            seed: 0,
        }
    }
}

impl SeriesSpec {
    pub fn order_for(&self, j: usize) -> usize {
        self.period_orders.as_ref().and_then(|o| o.get(j).copied()).unwrap_or(self.order)
    }

    /// Fill in default targets (period medians) so that resampled data are
    /// evaluated at the same points as the original sample.
    pub fn resolve_targets(&self, periods: &[ClassifiedPeriod]) -> Result<Vec<f64>> {
        if let Some(t) = &self.targets {
            if t.len() != periods.len() {
                return validation(format!("{} targets given for {} periods", t.len(), periods.len()));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return validation("targets must be finite");
            }
            return Ok(t.clone());
        }
        periods
            .iter()
            .enumerate()
            .map(|(j, p)| {
                if p.is_empty() {
                    return validation(format!("period {} has no observations", j + 1));
                }
                Ok(median(&p.w))
            })
            .collect()
    }

    fn validate(&self, n_periods: usize) -> Result<()> {
        if let Some(o) = &self.period_orders {
            if o.len() != n_periods {
                return validation(format!("{} period orders given for {n_periods} periods", o.len()));
            }
        }
        if (0..n_periods).any(|j| self.order_for(j) == 0) {
            return validation("basis order must be at least 1");
        }
        Ok(())
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Estimator choice plus smoothing settings; the JSON config format.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(flatten)]
    pub series: SeriesSpec,
}

impl EstimatorConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Estimated probabilities and, per budget, the covariance of `sqrt(N_j)` times
/// the estimation error.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub pi: PiVector,
    pub variances: Vec<DMatrix<f64>>,
}

impl Estimate {
    pub fn traces(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.trace()).collect()
    }

    pub fn effective_n(&self) -> Result<f64> {
        effective_n(&self.variances, self.pi.sample_sizes())
    }
}

/// `min_j N_j I_j / trace(v_j)`.
pub fn effective_n(variances: &[DMatrix<f64>], counts: &[usize]) -> Result<f64> {
    let blocks: Vec<usize> = variances.iter().map(|v| v.nrows()).collect();
    let traces: Vec<f64> = variances.iter().map(|v| v.trace()).collect();
    effective_n_smoothed(counts, &blocks, &traces)
}

fn assemble(periods: &[ClassifiedPeriod], parts: Vec<Result<fit::PeriodEstimate>>) -> Result<Estimate> {
    let mut values = Vec::new();
    let mut variances = Vec::with_capacity(parts.len());
    for part in parts {
        let (pi, v) = part?;
        values.extend(pi);
        variances.push(v);
    }
    let blocks = periods.iter().map(|p| p.n_patches).collect();
    let counts = periods.iter().map(ClassifiedPeriod::len).collect();
    let pi = PiVector::with_tolerance(values, blocks, counts, f64::INFINITY)?;
    Ok(Estimate { pi, variances })
}

/// Within-budget relative frequencies, with multinomial covariances.
pub fn freq_pi(data: &Microdata, t: &PatchTable) -> Result<Estimate> {
    freq_classified(&classify(data, t, None, TIE_TOL)?)
}

pub fn freq_classified(periods: &[ClassifiedPeriod]) -> Result<Estimate> {
    let parts = periods.iter().enumerate().map(|(j, p)| fit::freq_period(p, j)).collect();
    assemble(periods, parts)
}

/// Series regression of patch indicators on log expenditure, evaluated at each
/// period's target.
pub fn series_pi(data: &Microdata, t: &PatchTable, spec: &SeriesSpec, exec: Execution) -> Result<Estimate> {
    series_classified(&classify(data, t, spec.targets.as_deref(), TIE_TOL)?, spec, exec)
}

pub fn series_classified(periods: &[ClassifiedPeriod], spec: &SeriesSpec, exec: Execution) -> Result<Estimate> {
    spec.validate(periods.len())?;
    let targets = spec.resolve_targets(periods)?;
    let parts = exec
        .map_range(periods.len(), |j| fit::series_period(&periods[j], spec.basis, spec.order_for(j), targets[j], j));
    assemble(periods, parts)
}

/// Two-step control-function estimator. Requires an instrument in every period.
///
/// With a constant instrument or a single first-step basis function the control
/// variable would be the empirical CDF of `w`, which carries no information beyond
/// `w`; the point estimate is then the series estimate. With `control_order = 1`
/// the two coincide as well. The covariance always comes from the pairs bootstrap.
pub fn cf_pi(data: &Microdata, t: &PatchTable, spec: &SeriesSpec, exec: Execution) -> Result<Estimate> {
    cf_classified(&classify(data, t, spec.targets.as_deref(), TIE_TOL)?, spec, exec)
}

pub fn cf_classified(periods: &[ClassifiedPeriod], spec: &SeriesSpec, exec: Execution) -> Result<Estimate> {
    spec.validate(periods.len())?;
    if let Some(j) = periods.iter().position(|p| p.z.is_none()) {
        return validation(format!("period {}: control-function estimator needs an instrument column z", j + 1));
    }
    let targets = spec.resolve_targets(periods)?;
    let parts =
        exec.map_range(periods.len(), |j| fit::cf_period(&periods[j], spec, spec.order_for(j), targets[j], j, exec));
    assemble(periods, parts)
}

/// Classify and run the configured estimator.
pub fn estimate(data: &Microdata, t: &PatchTable, cfg: &EstimatorConfig, exec: Execution) -> Result<Estimate> {
    let periods = classify(data, t, cfg.series.targets.as_deref(), TIE_TOL)?;
    estimate_classified(&periods, cfg, exec)
}

pub fn estimate_classified(periods: &[ClassifiedPeriod], cfg: &EstimatorConfig, exec: Execution) -> Result<Estimate> {
    match cfg.estimator {
        Estimator::Freq => freq_classified(periods),
        Estimator::Series => series_classified(periods, &cfg.series, exec),
        Estimator::Cf => cf_classified(periods, &cfg.series, exec),
    }
}

/// Point estimate only, skipping covariance work.
pub fn point_estimate(periods: &[ClassifiedPeriod], cfg: &EstimatorConfig, targets: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (j, p) in periods.iter().enumerate() {
        let pi = match cfg.estimator {
            Estimator::Freq => fit::freq_period(p, j)?.0,
            Estimator::Series => fit::series_period(p, cfg.series.basis, cfg.series.order_for(j), targets[j], j)?.0,
            Estimator::Cf => fit::cf_point(p, &cfg.series, cfg.series.order_for(j), targets[j], j)?,
        };
        out.extend(pi);
    }
    Ok(out)
}

/// Nonparametric bootstrap: resample observations with replacement within each
/// period and re-run the estimator.
#[derive(Debug, Clone)]
pub struct PairsResampler {
    periods: Vec<ClassifiedPeriod>,
    cfg: EstimatorConfig,
    targets: Vec<f64>,
}

impl PairsResampler {
    pub fn new(periods: Vec<ClassifiedPeriod>, cfg: &EstimatorConfig) -> Result<Self> {
        let targets = match cfg.estimator {
            Estimator::Freq => vec![0.0; periods.len()],
            _ => cfg.series.resolve_targets(&periods)?,
        };
        Ok(PairsResampler { periods, cfg: cfg.clone(), targets })
    }
}

impl Resampler for PairsResampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let resampled: Vec<ClassifiedPeriod> = self
            .periods
            .iter()
            .map(|p| {
                let n = p.len();
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                p.select(&idx)
            })
            .collect();
        point_estimate(&resampled, &self.cfg, &self.targets)
    }
}
