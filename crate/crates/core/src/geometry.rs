//! Budget hyperplanes and their partition into patches.
//!
//! A budget is the set `{y >= 0 : p'y = 1}` for a strictly positive normalized price
//! vector `p`. A patch on budget `j` is a maximal region of that budget that lies
//! entirely on, strictly above or strictly below each other budget; it is identified
//! by its sign vector over budgets (`-1` below, `0` on, `+1` above, with `0` in
//! position `j` itself).

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::lp::{LinearProgram, Sense};

/// Default tolerance for the patch LPs.
pub const DEFAULT_GEOMETRY_TOL: f64 = 1e-9;
/// Default tolerance under which a bundle is treated as lying on another budget.
pub const DEFAULT_TIE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub label: String,
    pub price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSystem {
    budgets: Vec<Budget>,
    goods: usize,
}

impl BudgetSystem {
    pub fn new(budgets: Vec<Budget>) -> Result<Self> {
        let Some(first) = budgets.first() else {
            return validation("a budget system needs at least one budget");
        };
        let goods = first.price.len();
        if goods == 0 {
            return validation("price vectors must have at least one good");
        }
        for (j, b) in budgets.iter().enumerate() {
            if b.price.len() != goods {
                return validation(format!(
                    "budget {} ({}) has {} prices, expected {goods}",
                    j + 1,
                    b.label,
                    b.price.len()
                ));
            }
            if let Some(k) = b.price.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
                return validation(format!(
                    "price p{} of budget {} ({}) must be positive and finite, got {}",
                    k + 1,
                    j + 1,
                    b.label,
                    b.price[k]
                ));
            }
        }
        Ok(BudgetSystem { budgets, goods })
    }

    /// Budgets labelled `1..=J` from a list of normalized price vectors.
    pub fn from_prices(prices: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            prices.into_iter().enumerate().map(|(j, price)| Budget { label: (j + 1).to_string(), price }).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn budgets(&self) -> &[Budget] {
        &self.budgets
    }

    pub fn price(&self, j: usize) -> &[f64] {
        &self.budgets[j].price
    }

    /// `p_j'y - 1`: negative below budget `j`, positive above it.
    pub fn excess(&self, j: usize, y: &[f64]) -> f64 {
        dot(self.price(j), y) - 1.0
    }

    /// Restrict to a subset of budgets, in the given order.
    pub fn select(&self, which: &[usize]) -> Result<Self> {
        Self::new(which.iter().map(|&j| self.budgets[j].clone()).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Divide raw prices by total expenditure: `p_j = raw_j / exp(w_j)`.
pub fn normalize_budgets(
    labels: Vec<String>,
    raw_prices: &[Vec<f64>],
    log_expenditures: &[f64],
) -> Result<BudgetSystem> {
    if raw_prices.len() != log_expenditures.len() || raw_prices.len() != labels.len() {
        return validation("labels, price rows and log expenditures must have equal length");
    }
    let mut budgets = Vec::with_capacity(raw_prices.len());
    for (j, ((row, &w), label)) in raw_prices.iter().zip(log_expenditures).zip(labels).enumerate() {
        if !w.is_finite() {
            return validation(format!("log expenditure of budget {} ({label}) is not finite", j + 1));
        }
        if let Some(k) = row.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return validation(format!(
                "raw price p{} of budget {} ({label}) must be positive, got {}",
                k + 1,
                j + 1,
                row[k]
            ));
        }
        let scale = w.exp();
        budgets.push(Budget { label, price: row.iter().map(|p| p / scale).collect() });
    }
    BudgetSystem::new(budgets)
}

/// Read `period,p1,...,pK[,w]`. When a `w` column is present the row is normalized
/// by `exp(w)`.
pub fn read_prices_csv<R: Read>(reader: R) -> Result<BudgetSystem> {
    Ok(read_prices_csv_with_targets(reader)?.0)
}

/// Like [`read_prices_csv`], also returning the `w` column (the log expenditure each
/// budget is normalized at) when present.
pub fn read_prices_csv_with_targets<R: Read>(reader: R) -> Result<(BudgetSystem, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("period") {
        return validation("prices CSV must start with a `period` column");
    }
    let has_w = headers.iter().next_back() == Some("w");
    let n_goods = headers.len() - 1 - usize::from(has_w);
    for k in 0..n_goods {
        let expect = format!("p{}", k + 1);
        if headers.get(k + 1) != Some(expect.as_str()) {
            return validation(format!("prices CSV column {} should be `{expect}`", k + 2));
        }
    }
    let mut labels = Vec::new();
    let mut prices = Vec::new();
    let mut ws = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return validation(format!(
                "prices CSV row {} has {} fields, expected {}",
                r + 2,
                rec.len(),
                headers.len()
            ));
        }
        labels.push(rec[0].to_string());
        let mut row = Vec::with_capacity(n_goods);
        for k in 0..n_goods {
            row.push(parse_cell(&rec[k + 1], r + 2, &headers[k + 1])?);
        }
        prices.push(row);
        ws.push(if has_w { parse_cell(&rec[n_goods + 1], r + 2, "w")? } else { 0.0 });
    }
    if prices.is_empty() {
        return validation("prices CSV has no rows");
    }
    let b = normalize_budgets(labels, &prices, &ws)?;
    Ok((b, has_w.then_some(ws)))
}

pub(crate) fn parse_cell(s: &str, row: usize, column: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Validation(format!("row {row}, column `{column}`: cannot parse {s:?} as a number")))
}

/// Two budget lines in the plane that cross once: `p = (1, 2)` and `p = (2, 1)`.
pub fn two_crossing_budgets() -> BudgetSystem {
    BudgetSystem::from_prices(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).expect("valid prices")
}

/// Three budgets in three goods whose pairwise choices can satisfy WARP while
/// violating SARP.
pub fn three_cyclic_budgets() -> BudgetSystem {
    BudgetSystem::from_prices(vec![vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.25], vec![0.25, 0.25, 0.5]])
        .expect("valid prices")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub budget: usize,
    pub sign: Vec<i8>,
    pub representative: Vec<f64>,
    /// Zero-based position within the budget's block.
    pub within_budget_index: usize,
}

#[derive(Debug, Clone)]
pub struct PatchTable {
    budgets: BudgetSystem,
    patches: Vec<Patch>,
    counts: Vec<usize>,
    offsets: Vec<usize>,
    drop_intersections: bool,
    tol: f64,
    lookup: Vec<HashMap<Vec<i8>, usize>>,
}

impl PatchTable {
    /// Assemble a table from per-budget patch lists. Patches are sorted into
    /// canonical (lexicographic sign) order.
    pub fn from_patches(
        budgets: BudgetSystem,
        mut per_budget: Vec<Vec<Patch>>,
        drop_intersections: bool,
        tol: f64,
    ) -> Result<Self> {
        if per_budget.len() != budgets.len() {
            return Err(Error::Internal("patch lists do not match budgets".into()));
        }
        let mut patches = Vec::new();
        let mut counts = Vec::new();
        let mut offsets = Vec::new();
        let mut lookup = Vec::new();
        for (j, list) in per_budget.iter_mut().enumerate() {
            list.sort_by(|a, b| a.sign.cmp(&b.sign));
            offsets.push(patches.len());
            counts.push(list.len());
            let mut map = HashMap::new();
            for (i, p) in list.iter_mut().enumerate() {
                p.within_budget_index = i;
                p.budget = j;
                if map.insert(p.sign.clone(), patches.len() + i).is_some() {
                    return Err(Error::Internal(format!("duplicate sign vector on budget {}", j + 1)));
                }
            }
            patches.append(list);
            lookup.push(map);
        }
        Ok(PatchTable { budgets, patches, counts, offsets, drop_intersections, tol, lookup })
    }

    pub fn budgets(&self) -> &BudgetSystem {
        &self.budgets
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, global: usize) -> &Patch {
        &self.patches[global]
    }

    /// Total number of rows `I` (patches counted once per budget they belong to).
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn n_budgets(&self) -> usize {
        self.counts.len()
    }

    pub fn per_budget_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn drop_intersections(&self) -> bool {
        self.drop_intersections
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn global_index(&self, budget: usize, within: usize) -> usize {
        debug_assert!(within < self.counts[budget]);
        self.offsets[budget] + within
    }

    /// The entry `X[i][k]` of the sign matrix.
    pub fn sign(&self, global: usize, k: usize) -> i8 {
        self.patches[global].sign[k]
    }

    /// The full `I x J` sign matrix.
    pub fn x_matrix(&self) -> Vec<Vec<i8>> {
        self.patches.iter().map(|p| p.sign.clone()).collect()
    }

    pub fn find(&self, budget: usize, sign: &[i8]) -> Option<usize> {
        self.lookup[budget].get(sign).copied()
    }

    /// Write `budget,within_index,sign_vector,representative`, 1-based indices,
    /// vector entries separated by `;`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["budget", "within_index", "sign_vector", "representative"])?;
        for p in &self.patches {
            let sign = p.sign.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";");
            let rep = p.representative.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";");
            w.write_record([(p.budget + 1).to_string(), (p.within_budget_index + 1).to_string(), sign, rep])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Candidate sign values for the other budgets.
fn sign_alphabet(drop_intersections: bool) -> &'static [i8] {
    if drop_intersections {
        &[-1, 1]
    } else {
        &[-1, 0, 1]
    }
}

/// Partition every budget into patches.
///
/// One LP per candidate sign vector maximizes a common margin `m` with which the
/// strict sign conditions hold; the region is a patch iff the optimal margin
/// exceeds `tol`, and the maximizer becomes the patch representative.
pub fn enumerate_patches(b: &BudgetSystem, drop_intersections: bool, tol: f64, exec: Execution) -> Result<PatchTable> {
    if !(tol > 0.0) {
        return validation("geometry tolerance must be positive");
    }
    let n = b.len();
    if n > 20 {
        return Err(Error::CapExceeded {
            what: "number of budgets for patch enumeration",
            value: n as u128,
            cap: 20,
            hint: "",
        });
    }
    let alphabet = sign_alphabet(drop_intersections);
    let per_budget: Vec<Result<Vec<Patch>>> = exec.map_range(n, |j| {
        let others = n - 1;
        let total = alphabet.len().pow(others as u32);
        let mut patches = Vec::new();
        for code in 0..total {
            let mut sign = vec![0i8; n];
            let mut c = code;
            for k in (0..n).rev() {
                if k == j {
                    continue;
                }
                sign[k] = alphabet[c % alphabet.len()];
                c /= alphabet.len();
            }
            let (margin, y) = max_margin_point(b, j, &sign)
                .map_err(|e| Error::Internal(format!("patch LP on budget {} failed: {e}", j + 1)))?;
            if margin > tol {
                patches.push(Patch { budget: j, sign, representative: y, within_budget_index: 0 });
            }
        }
        Ok(patches)
    });
    let per_budget = per_budget.into_iter().collect::<Result<Vec<_>>>()?;
    PatchTable::from_patches(b.clone(), per_budget, drop_intersections, tol)
}

/// Maximize `m` s.t. `y >= 0`, `p_j'y = 1`, `s_k (p_k'y - 1) >= m` for `s_k != 0`,
/// `p_k'y = 1` for `s_k = 0` (k != j), and `m <= 1`. Returns `(-inf, _)` if the
/// equality rows alone are infeasible.
fn max_margin_point(b: &BudgetSystem, j: usize, sign: &[i8]) -> Result<(f64, Vec<f64>)> {
    let kdim = b.goods();
    // variables: y (K), m+ , m-
    let mut lp = LinearProgram::new(kdim + 2);
    let mut cost = vec![0.0; kdim + 2];
    cost[kdim] = 1.0;
    cost[kdim + 1] = -1.0;
    lp.maximize(cost);
    let row = |p: &[f64], s: f64, with_margin: bool| {
        let mut e: Vec<(usize, f64)> = p.iter().enumerate().map(|(k, v)| (k, s * v)).collect();
        if with_margin {
            e.push((kdim, -1.0));
            e.push((kdim + 1, 1.0));
        }
        e
    };
    lp.add_row(row(b.price(j), 1.0, false), Sense::Eq, 1.0);
    for (k, &s) in sign.iter().enumerate() {
        if k == j {
            continue;
        }
        if s == 0 {
            lp.add_row(row(b.price(k), 1.0, false), Sense::Eq, 1.0);
        } else {
            let s = f64::from(s);
            lp.add_row(row(b.price(k), s, true), Sense::Ge, s);
        }
    }
    lp.add_row(vec![(kdim, 1.0), (kdim + 1, -1.0)], Sense::Le, 1.0);
    let sol = lp.solve()?;
    if !sol.is_optimal() {
        return Ok((f64::NEG_INFINITY, Vec::new()));
    }
    let y = sol.x[..kdim].to_vec();
    Ok((sol.objective, y))
}

/// Which patch of budget `j` contains bundle `y`? `y` must satisfy `p_j'y = 1` up to
/// `tie_tol`. Other budgets within `tie_tol` count as "on" when intersection patches
/// are kept, and as "below" when they are dropped.
pub fn classify_bundle(y: &[f64], j: usize, t: &PatchTable, tie_tol: f64) -> Result<usize> {
    let b = t.budgets();
    if j >= b.len() {
        return validation(format!("budget index {} out of range", j + 1));
    }
    if y.len() != b.goods() {
        return validation(format!("bundle has {} goods, expected {}", y.len(), b.goods()));
    }
    let own = b.excess(j, y);
    if own.abs() > tie_tol {
        return Err(Error::Data(format!("bundle {y:?} is off budget {} (p'y - 1 = {own:e})", j + 1)));
    }
    let sign = sign_vector(y, j, b, t.drop_intersections(), tie_tol);
    t.find(j, &sign).ok_or_else(|| {
        Error::Internal(format!("bundle {y:?} has sign vector {sign:?} matching no patch of budget {}", j + 1))
    })
}

pub(crate) fn sign_vector(y: &[f64], j: usize, b: &BudgetSystem, drop: bool, tie_tol: f64) -> Vec<i8> {
    (0..b.len())
        .map(|k| {
            if k == j {
                return 0;
            }
            let e = b.excess(k, y);
            if e.abs() <= tie_tol {
                if drop {
                    -1
                } else {
                    0
                }
            } else if e > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect()
}

/// Minimum and maximum of good `k` over the closure of a patch.
pub fn patch_extrema(t: &PatchTable, patch: usize, k: usize) -> Result<(f64, f64)> {
    let b = t.budgets();
    if patch >= t.len() {
        return validation(format!("patch index {patch} out of range"));
    }
    if k >= b.goods() {
        return validation(format!("good index {} out of range", k + 1));
    }
    let p = t.patch(patch);
    let kdim = b.goods();
    let mut lp = LinearProgram::new(kdim);
    lp.add_dense_row(b.price(p.budget), Sense::Eq, 1.0);
    for (other, &s) in p.sign.iter().enumerate() {
        if other == p.budget {
            continue;
        }
        let sense = match s {
            -1 => Sense::Le,
            1 => Sense::Ge,
            _ => Sense::Eq,
        };
        lp.add_dense_row(b.price(other), sense, 1.0);
    }
    let mut unit = vec![0.0; kdim];
    unit[k] = 1.0;
    let mut bound = |maximize: bool| -> Result<f64> {
        if maximize {
            lp.maximize(unit.clone());
        } else {
            lp.minimize(unit.clone());
        }
        let s = lp.solve()?;
        if !s.is_optimal() {
            return Err(Error::Internal(format!("extrema LP for patch {patch} is {:?}", s.status)));
        }
        Ok(s.objective)
    };
    let lo = bound(false)?;
    let hi = bound(true)?;
    Ok((lo, hi.max(lo)))
}

/// Do budgets `j` and `k` share a point?
pub fn budgets_intersect(b: &BudgetSystem, j: usize, k: usize) -> Result<bool> {
    if j == k {
        return Ok(true);
    }
    let mut lp = LinearProgram::new(b.goods());
    lp.add_dense_row(b.price(j), Sense::Eq, 1.0);
    lp.add_dense_row(b.price(k), Sense::Eq, 1.0);
    Ok(lp.solve()?.is_optimal())
}
