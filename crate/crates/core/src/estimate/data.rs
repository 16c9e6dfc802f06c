//! Cross-sectional microdata: one table of observations per budget.

use std::io::{Read, Write};

use crate::error::{validation, Error, Result};
use crate::geometry::{classify_bundle, parse_cell, PatchTable};

/// What each consumer was observed choosing.
#[derive(Debug, Clone, PartialEq)]
pub enum Choices {
    /// Demanded bundles in physical units.
    Bundles(Vec<Vec<f64>>),
    /// Within-budget patch indices, 0-based.
    Patches(Vec<usize>),
}

impl Choices {
    pub fn len(&self) -> usize {
        match self {
            Choices::Bundles(b) => b.len(),
            Choices::Patches(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodData {
    pub choices: Choices,
    /// Log total expenditure.
    pub w: Vec<f64>,
    /// Instrument for `w`.
    pub z: Option<Vec<f64>>,
}

impl PeriodData {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Microdata {
    pub periods: Vec<PeriodData>,
}

impl Microdata {
    pub fn counts(&self) -> Vec<usize> {
        self.periods.iter().map(PeriodData::len).collect()
    }

    pub fn has_instruments(&self) -> bool {
        self.periods.iter().all(|p| p.z.is_some())
    }

    pub fn validate(&self, n_budgets: usize) -> Result<()> {
        if self.periods.len() != n_budgets {
            return validation(format!("microdata has {} periods, expected {n_budgets}", self.periods.len()));
        }
        for (j, p) in self.periods.iter().enumerate() {
            if p.choices.len() != p.w.len() || p.z.as_ref().is_some_and(|z| z.len() != p.w.len()) {
                return validation(format!("period {}: columns have different lengths", j + 1));
            }
            if p.w.iter().any(|w| !w.is_finite()) || p.z.as_ref().is_some_and(|z| z.iter().any(|v| !v.is_finite())) {
                return validation(format!("period {}: non-finite w or z", j + 1));
            }
        }
        Ok(())
    }
}

/// Observations of one period with choices resolved to patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedPeriod {
    pub patch: Vec<usize>,
    pub w: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub n_patches: usize,
}

impl ClassifiedPeriod {
    pub fn len(&self) -> usize {
        self.patch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patch.is_empty()
    }

    /// The observations at positions `idx`, with repetition.
    pub fn select(&self, idx: &[usize]) -> ClassifiedPeriod {
        ClassifiedPeriod {
            patch: idx.iter().map(|&i| self.patch[i]).collect(),
            w: idx.iter().map(|&i| self.w[i]).collect(),
            z: self.z.as_ref().map(|z| idx.iter().map(|&i| z[i]).collect()),
            n_patches: self.n_patches,
        }
    }
}

/// Relative tolerance for `p~'q = exp(w)` when targets are known.
pub const EXPENDITURE_TOL: f64 = 1e-6;

/// Resolve every observation to a within-budget patch.
///
/// Bundles are rescaled onto the normalized budget (`q / p_j'q`) before
/// classification. When `targets` (the log expenditure each budget was normalized
/// at) are given, each bundle must also exhaust its consumer's expenditure:
/// `p_j'q = exp(w - target_j)`.
pub fn classify(
    data: &Microdata,
    t: &PatchTable,
    targets: Option<&[f64]>,
    tie_tol: f64,
) -> Result<Vec<ClassifiedPeriod>> {
    data.validate(t.n_budgets())?;
    if let Some(tg) = targets {
        if tg.len() != t.n_budgets() {
            return validation("need one target log expenditure per budget");
        }
    }
    let mut out = Vec::with_capacity(data.periods.len());
    for (j, p) in data.periods.iter().enumerate() {
        let n_patches = t.per_budget_counts()[j];
        let patch = match &p.choices {
            Choices::Patches(idx) => {
                if let Some(bad) = idx.iter().find(|&&i| i >= n_patches) {
                    return Err(Error::Data(format!(
                        "period {}: patch {} does not exist (budget has {n_patches})",
                        j + 1,
                        bad + 1
                    )));
                }
                idx.clone()
            }
            Choices::Bundles(qs) => {
                let price = t.budgets().price(j);
                let mut idx = Vec::with_capacity(qs.len());
                for (n, q) in qs.iter().enumerate() {
                    if q.len() != price.len() {
                        return validation(format!("period {}: bundle {} has {} goods", j + 1, n + 1, q.len()));
                    }
                    if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                        return Err(Error::Data(format!("period {}: bundle {} has a negative quantity", j + 1, n + 1)));
                    }
                    let spend: f64 = price.iter().zip(q).map(|(a, b)| a * b).sum();
                    if !(spend > 0.0) {
                        return Err(Error::Data(format!("period {}: bundle {} is zero", j + 1, n + 1)));
                    }
                    if let Some(tg) = targets {
                        let want = (p.w[n] - tg[j]).exp();
                        if ((spend - want) / want).abs() > EXPENDITURE_TOL {
                            return Err(Error::Data(format!(
                                "period {}: bundle {} costs {:.6e} at normalized prices, expected exp(w - target) = {want:.6e}",
                                j + 1,
                                n + 1,
                                spend
                            )));
                        }
                    }
                    let y: Vec<f64> = q.iter().map(|v| v / spend).collect();
                    let g = classify_bundle(&y, j, t, tie_tol)?;
                    idx.push(g - t.offsets()[j]);
                }
                idx
            }
        };
        out.push(ClassifiedPeriod { patch, w: p.w.clone(), z: p.z.clone(), n_patches });
    }
    Ok(out)
}

/// Read `period,q1,...,qK,w[,z]` or `period,patch,w[,z]`. Periods and patches are
/// 1-based.
pub fn read_microdata_csv<R: Read>(reader: R, n_periods: usize) -> Result<Microdata> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.first() != Some(&"period") {
        return validation("microdata CSV must start with a `period` column");
    }
    let has_z = names.last() == Some(&"z");
    let w_col = names.len() - 1 - usize::from(has_z);
    if names.get(w_col) != Some(&"w") {
        return validation("microdata CSV needs a `w` column after the choice columns");
    }
    let middle = &names[1..w_col];
    let patch_form = middle == ["patch"];
    if !patch_form {
        if middle.is_empty() {
            return validation("microdata CSV has no choice columns");
        }
        for (k, name) in middle.iter().enumerate() {
            if *name != format!("q{}", k + 1) {
                return validation(format!("microdata CSV column {} should be `q{}`", k + 2, k + 1));
            }
        }
    }
    let mut bundles: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_periods];
    let mut patches: Vec<Vec<usize>> = vec![Vec::new(); n_periods];
    let mut ws: Vec<Vec<f64>> = vec![Vec::new(); n_periods];
    let mut zs: Vec<Vec<f64>> = vec![Vec::new(); n_periods];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 2;
        if rec.len() != names.len() {
            return validation(format!("microdata row {row} has {} fields, expected {}", rec.len(), names.len()));
        }
        let period: usize = rec[0]
            .parse()
            .map_err(|_| Error::Validation(format!("row {row}, column `period`: cannot parse {:?}", &rec[0])))?;
        if period == 0 || period > n_periods {
            return validation(format!("row {row}: period {period} outside 1..={n_periods}"));
        }
        let j = period - 1;
        if patch_form {
            let p: usize = rec[1]
                .parse()
                .ok()
                .filter(|&p| p >= 1)
                .ok_or_else(|| Error::Validation(format!("row {row}, column `patch`: bad value {:?}", &rec[1])))?;
            patches[j].push(p - 1);
        } else {
            let mut q = Vec::with_capacity(middle.len());
            for k in 0..middle.len() {
                q.push(parse_cell(&rec[k + 1], row, middle[k])?);
            }
            bundles[j].push(q);
        }
        ws[j].push(parse_cell(&rec[w_col], row, "w")?);
        if has_z {
            zs[j].push(parse_cell(&rec[w_col + 1], row, "z")?);
        }
    }
    let periods = (0..n_periods)
        .map(|j| PeriodData {
            choices: if patch_form {
                Choices::Patches(std::mem::take(&mut patches[j]))
            } else {
                Choices::Bundles(std::mem::take(&mut bundles[j]))
            },
            w: std::mem::take(&mut ws[j]),
            z: has_z.then(|| std::mem::take(&mut zs[j])),
        })
        .collect();
    Ok(Microdata { periods })
}

pub fn write_microdata_csv<W: Write>(data: &Microdata, writer: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(writer);
    let has_z = data.has_instruments() && data.periods.iter().any(|p| p.z.is_some());
    let bundle_goods = data.periods.iter().find_map(|p| match &p.choices {
        Choices::Bundles(b) => b.first().map(Vec::len),
        Choices::Patches(_) => None,
    });
    let patch_form = data.periods.iter().any(|p| matches!(p.choices, Choices::Patches(_)));
    if patch_form && bundle_goods.is_some() {
        return validation("cannot mix bundles and patch indices in one file");
    }
    let mut header = vec!["period".to_string()];
    match bundle_goods {
        Some(k) => header.extend((1..=k).map(|i| format!("q{i}"))),
        None => header.push("patch".into()),
    }
    header.push("w".into());
    if has_z {
        header.push("z".into());
    }
    wr.write_record(&header)?;
    for (j, p) in data.periods.iter().enumerate() {
        for n in 0..p.len() {
            let mut rec = vec![(j + 1).to_string()];
            match &p.choices {
                Choices::Bundles(b) => rec.extend(b[n].iter().map(|v| v.to_string())),
                Choices::Patches(idx) => rec.push((idx[n] + 1).to_string()),
            }
            rec.push(p.w[n].to_string());
            if has_z {
                rec.push(p.z.as_ref().expect("instruments present")[n].to_string());
            }
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}
