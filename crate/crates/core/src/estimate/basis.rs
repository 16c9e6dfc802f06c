//! Sieve bases on a scalar regressor.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    #[default]
    Power,
    /// Cubic regression spline in truncated-power form with knots at sample
    /// quantiles. Identical to `Power` for four or fewer functions.
    Spline,
}

impl std::str::FromStr for BasisKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(BasisKind::Power),
            "spline" => Ok(BasisKind::Spline),
            other => validation(format!("unknown basis {other:?}; expected power or spline")),
        }
    }
}

/// A basis of `order` functions fitted to the range of one sample. Inputs are
/// mapped affinely so the sample spans `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBasis {
    order: usize,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

impl SeriesBasis {
    pub fn fit(kind: BasisKind, order: usize, sample: &[f64]) -> Result<Self> {
        if order == 0 {
            return validation("basis order must be at least 1");
        }
        let (lo, hi) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mut basis = SeriesBasis { order, lo, hi, knots: Vec::new() };
        if kind == BasisKind::Spline && order > 4 {
            let mut s: Vec<f64> = sample.iter().map(|&v| basis.standardize(v)).collect();
            s.sort_by(f64::total_cmp);
            let n_knots = order - 4;
            basis.knots = (1..=n_knots)
                .map(|m| {
                    let pos = m as f64 / (n_knots + 1) as f64 * (s.len() - 1) as f64;
                    let (i, frac) = (pos.floor() as usize, pos.fract());
                    let next = s[(i + 1).min(s.len() - 1)];
                    s[i] + frac * (next - s[i])
                })
                .collect();
        }
        Ok(basis)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn standardize(&self, v: f64) -> f64 {
        if self.hi > self.lo {
            2.0 * (v - self.lo) / (self.hi - self.lo) - 1.0
        } else {
            0.0
        }
    }

    pub fn eval_into(&self, v: f64, out: &mut [f64]) {
        let s = self.standardize(v);
        power_into(s, &mut out[..self.order - self.knots.len()]);
        for (m, &k) in self.knots.iter().enumerate() {
            let d = (s - k).max(0.0);
            out[4 + m] = d * d * d;
        }
    }

    pub fn eval(&self, v: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.order];
        self.eval_into(v, &mut out);
        out
    }
}

/// `1, s, s^2, ...` filling `out`.
pub fn power_into(s: f64, out: &mut [f64]) {
    let mut p = 1.0;
    for o in out.iter_mut() {
        *o = p;
        p *= s;
    }
}
