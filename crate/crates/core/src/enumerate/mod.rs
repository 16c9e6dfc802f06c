//! The rational demand matrix `A`: one 0/1 column per rationalizable choice type.
//!
//! Columns are stored sparsely as within-budget pick tuples and kept in
//! lexicographic order of those tuples. All enumeration algorithms return the
//! same matrix, bit for bit.

mod binary;
mod io;

pub use binary::{all_pairs, binary_menu_a};
pub use io::{read_a_file, write_a_file, write_dense_csv};

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::geometry::{budgets_intersect, PatchTable};
use crate::revpref::{picks_are_rationalizable, Axiom, IncrementalChecker, MAX_BUDGETS};

pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 10_000_000;
pub const DEFAULT_BINARY_ITEM_CAP: usize = 8;

/// Size limits for the exponential constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub brute_force: u128,
    pub binary_items: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { brute_force: DEFAULT_BRUTE_FORCE_CAP, binary_items: DEFAULT_BINARY_ITEM_CAP }
    }
}

impl Caps {
    /// Defaults overridden by `RUMCONE_BRUTE_FORCE_CAP` and `RUMCONE_BINARY_ITEM_CAP`.
    pub fn from_env() -> Result<Self> {
        let mut c = Caps::default();
        if let Ok(v) = std::env::var("RUMCONE_BRUTE_FORCE_CAP") {
            c.brute_force =
                v.trim().parse().map_err(|_| Error::Validation(format!("RUMCONE_BRUTE_FORCE_CAP: bad value {v:?}")))?;
        }
        if let Ok(v) = std::env::var("RUMCONE_BINARY_ITEM_CAP") {
            c.binary_items =
                v.trim().parse().map_err(|_| Error::Validation(format!("RUMCONE_BINARY_ITEM_CAP: bad value {v:?}")))?;
        }
        Ok(c)
    }
}

/// `I x H` binary matrix of rationalizable choice types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
    /// Row-major `H x J` pick indices.
    picks: Vec<u32>,
    axiom: Axiom,
}

impl RationalMatrix {
    /// Build from pick tuples; sorts them canonically and rejects duplicates.
    pub fn from_columns(block_sizes: Vec<usize>, mut columns: Vec<Vec<u32>>, axiom: Axiom) -> Result<Self> {
        let j = block_sizes.len();
        for c in &columns {
            if c.len() != j {
                return validation(format!("column has {} picks, expected {j}", c.len()));
            }
            for (b, (&p, &n)) in c.iter().zip(&block_sizes).enumerate() {
                if p as usize >= n {
                    return validation(format!("pick {} on budget {} exceeds block size {n}", p + 1, b + 1));
                }
            }
        }
        columns.sort_unstable();
        if columns.windows(2).any(|w| w[0] == w[1]) {
            return validation("duplicate columns");
        }
        Ok(Self::from_sorted(block_sizes, columns.concat(), axiom))
    }

    fn from_sorted(block_sizes: Vec<usize>, picks: Vec<u32>, axiom: Axiom) -> Self {
        let mut offsets = Vec::with_capacity(block_sizes.len());
        let mut acc = 0;
        for &n in &block_sizes {
            offsets.push(acc);
            acc += n;
        }
        RationalMatrix { block_sizes, offsets, picks, axiom }
    }

    /// Number of rows `I`.
    pub fn n_rows(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Number of columns `H`.
    pub fn n_cols(&self) -> usize {
        if self.block_sizes.is_empty() {
            0
        } else {
            self.picks.len() / self.block_sizes.len()
        }
    }

    pub fn n_budgets(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn axiom(&self) -> Axiom {
        self.axiom
    }

    /// Pick tuple of column `h`.
    pub fn column(&self, h: usize) -> &[u32] {
        let j = self.n_budgets();
        &self.picks[h * j..(h + 1) * j]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[u32]> {
        self.picks.chunks_exact(self.n_budgets().max(1))
    }

    /// Row indices holding a one in column `h`.
    pub fn column_rows(&self, h: usize) -> impl Iterator<Item = usize> + '_ {
        self.column(h).iter().zip(&self.offsets).map(|(&p, &o)| o + p as usize)
    }

    pub fn contains(&self, picks: &[u32]) -> bool {
        self.columns().collect::<Vec<_>>().binary_search(&picks).is_ok()
    }

    /// Dense `I x H` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows(), self.n_cols());
        for h in 0..self.n_cols() {
            for r in self.column_rows(h) {
                m[(r, h)] = 1.0;
            }
        }
        m
    }

    /// Dense rows as 0/1 bytes, row-major.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        let mut rows = vec![vec![0u8; self.n_cols()]; self.n_rows()];
        for h in 0..self.n_cols() {
            for r in self.column_rows(h) {
                rows[r][h] = 1;
            }
        }
        rows
    }

    /// `(a_1 - a_0)'(a_2 - a_0)` for three columns.
    pub fn triplet_product(&self, h0: usize, h1: usize, h2: usize) -> i64 {
        let same = |x: usize, y: usize| -> i64 {
            self.column(x).iter().zip(self.column(y)).filter(|(a, b)| a == b).count() as i64
        };
        same(h1, h2) - same(h1, h0) - same(h0, h2) + self.n_budgets() as i64
    }

    /// A triplet of distinct columns with `(a_1 - a_0)'(a_2 - a_0) < 0`, if any.
    ///
    /// Checks every ordered triplet when `H <= exhaustive_limit`, otherwise `samples`
    /// random triplets.
    pub fn find_obtuse_triplet(
        &self,
        exhaustive_limit: usize,
        samples: usize,
        rng: &mut impl Rng,
    ) -> Option<(usize, usize, usize)> {
        let h = self.n_cols();
        if h < 3 {
            return None;
        }
        if h <= exhaustive_limit {
            for a in 0..h {
                for b in 0..h {
                    for c in 0..h {
                        if a != b && b != c && a != c && self.triplet_product(a, b, c) < 0 {
                            return Some((a, b, c));
                        }
                    }
                }
            }
            return None;
        }
        for _ in 0..samples {
            let a = rng.random_range(0..h);
            let b = rng.random_range(0..h);
            let c = rng.random_range(0..h);
            if a != b && b != c && a != c && self.triplet_product(a, b, c) < 0 {
                return Some((a, b, c));
            }
        }
        None
    }
}

fn check_table(t: &PatchTable) -> Result<()> {
    if t.n_budgets() == 0 {
        return validation("no budgets");
    }
    if t.n_budgets() > MAX_BUDGETS {
        return validation(format!("at most {MAX_BUDGETS} budgets are supported"));
    }
    Ok(())
}

fn candidate_count(t: &PatchTable) -> u128 {
    t.per_budget_counts().iter().fold(1u128, |a, &n| a.saturating_mul(n as u128))
}

/// Check every complete pick tuple, in odometer order.
pub fn brute_force_a(t: &PatchTable, ax: Axiom, caps: &Caps, exec: Execution) -> Result<RationalMatrix> {
    check_table(t)?;
    let total = candidate_count(t);
    if total > caps.brute_force {
        return Err(Error::CapExceeded {
            what: "number of candidate choice vectors",
            value: total,
            cap: caps.brute_force,
            hint: "; use the crawl algorithm instead",
        });
    }
    let total = total as usize;
    let counts = t.per_budget_counts().to_vec();
    let j = counts.len();
    const CHUNK: usize = 1 << 14;
    let chunks = total.div_ceil(CHUNK);
    let parts = exec.map_range(chunks, |c| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(total);
        let mut digits = vec![0u32; j];
        let mut rem = start;
        for b in (0..j).rev() {
            digits[b] = (rem % counts[b]) as u32;
            rem /= counts[b];
        }
        let mut out = Vec::new();
        for _ in start..end {
            if picks_are_rationalizable(t, &digits, ax) {
                out.extend_from_slice(&digits);
            }
            for b in (0..j).rev() {
                digits[b] += 1;
                if (digits[b] as usize) < counts[b] {
                    break;
                }
                digits[b] = 0;
            }
        }
        out
    });
    Ok(RationalMatrix::from_sorted(counts, parts.concat(), ax))
}

/// Depth-first search over budgets in order, pruning any partial choice that is
/// already inconsistent. Subtrees under distinct first-budget picks run in parallel.
pub fn crawl_a(t: &PatchTable, ax: Axiom, exec: Execution) -> Result<RationalMatrix> {
    check_table(t)?;
    let j = t.n_budgets();
    let order: Vec<usize> = (0..j).collect();
    let parts = exec.map_range(t.per_budget_counts()[0], |first| {
        let mut chk = IncrementalChecker::new(t, ax);
        let mut out = Vec::new();
        if chk.push(0, first) {
            let mut cur = vec![0u32; j];
            cur[0] = first as u32;
            crawl_into(t, &mut chk, &order, 1, &mut cur, &mut out);
        }
        out
    });
    Ok(RationalMatrix::from_sorted(t.per_budget_counts().to_vec(), parts.concat(), ax))
}

/// Append, in lexicographic order over `free`, every rationalizable completion of the
/// checker's current assignment. Picks are written into `cur` at their budget index
/// and each completed `cur` restricted to `free` is appended to `out`.
fn crawl_into(
    t: &PatchTable,
    chk: &mut IncrementalChecker<'_>,
    free: &[usize],
    depth: usize,
    cur: &mut [u32],
    out: &mut Vec<u32>,
) {
    if depth == free.len() {
        out.extend(free.iter().map(|&b| cur[b]));
        return;
    }
    let b = free[depth];
    for i in 0..t.per_budget_counts()[b] {
        if chk.push(b, i) {
            cur[b] = i as u32;
            crawl_into(t, chk, free, depth + 1, cur, out);
            chk.pop(b);
        }
    }
}

/// Pairwise intersection relation between budgets, from one LP per pair.
pub fn intersection_matrix(t: &PatchTable) -> Result<Vec<Vec<bool>>> {
    let b = t.budgets();
    let n = b.len();
    let mut m = vec![vec![true; n]; n];
    for j in 0..n {
        for k in j + 1..n {
            let x = budgets_intersect(b, j, k)?;
            m[j][k] = x;
            m[k][j] = x;
        }
    }
    Ok(m)
}

/// Enumerate by splitting off budgets that lie entirely on one side of a pivot budget.
///
/// If every budget in `S` lies below (or every one above) budget `t`, a choice that is
/// rationalizable on all budgets but `t` is rationalizable overall iff its restriction
/// to the budgets outside `S` is. So the columns are products of completions over `S`
/// and over `{t}` of each column on the remaining budgets, which are themselves built
/// recursively. Falls back to [`crawl_a`] when no budget pair is disjoint.
pub fn decompose_a(t: &PatchTable, ax: Axiom, exec: Execution) -> Result<RationalMatrix> {
    check_table(t)?;
    let inter = intersection_matrix(t)?;
    let j = t.n_budgets();
    // side[k][m] = -1 if budget k lies below budget m, +1 if above, 0 if they meet.
    let side: Vec<Vec<i8>> = (0..j)
        .map(|k| (0..j).map(|m| if k == m || inter[k][m] { 0 } else { t.sign(t.global_index(k, 0), m) }).collect())
        .collect();
    let all: Vec<usize> = (0..j).collect();
    let mut cols = decompose_rec(t, ax, &side, &all, exec);
    let mut tuples: Vec<&[u32]> = cols.chunks_exact(j).collect();
    tuples.sort_unstable();
    cols = tuples.concat();
    Ok(RationalMatrix::from_sorted(t.per_budget_counts().to_vec(), cols, ax))
}

/// Columns over `active` as flat `|active|`-tuples in the order of `active`.
fn decompose_rec(t: &PatchTable, ax: Axiom, side: &[Vec<i8>], active: &[usize], exec: Execution) -> Vec<u32> {
    let split = active
        .iter()
        .flat_map(|&p| {
            [-1i8, 1].map(|s| {
                let set: Vec<usize> = active.iter().copied().filter(|&k| side[k][p] == s).collect();
                (set.len(), p, set)
            })
        })
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let Some((n_split, pivot, group)) = split.filter(|s| s.0 > 0) else {
        return crawl_subset(t, ax, &[], &[], active, exec);
    };
    debug_assert_eq!(n_split, group.len());
    let middle: Vec<usize> = active.iter().copied().filter(|&k| k != pivot && !group.contains(&k)).collect();
    let mid_cols = if middle.is_empty() { Vec::new() } else { decompose_rec(t, ax, side, &middle, exec) };
    let n_mid = if middle.is_empty() { 1 } else { mid_cols.len() / middle.len() };
    let pos = |b: usize| active.iter().position(|&a| a == b).unwrap();
    let parts = exec.map_range(n_mid, |h| {
        let fixed: &[u32] = if middle.is_empty() { &[] } else { &mid_cols[h * middle.len()..(h + 1) * middle.len()] };
        let lower = crawl_subset(t, ax, &middle, fixed, &group, Execution::Sequential);
        let upper = crawl_subset(t, ax, &middle, fixed, &[pivot], Execution::Sequential);
        let mut out = Vec::new();
        let mut row = vec![0u32; active.len()];
        for (b, &p) in middle.iter().zip(fixed) {
            row[pos(*b)] = p;
        }
        for g in lower.chunks_exact(group.len()) {
            for (b, &p) in group.iter().zip(g) {
                row[pos(*b)] = p;
            }
            for &u in &upper {
                row[pos(pivot)] = u;
                out.extend_from_slice(&row);
            }
        }
        out
    });
    parts.concat()
}

/// Rationalizable completions over `free` of the assignment `fixed` on `assigned`.
fn crawl_subset(
    t: &PatchTable,
    ax: Axiom,
    assigned: &[usize],
    fixed: &[u32],
    free: &[usize],
    exec: Execution,
) -> Vec<u32> {
    let mut base = IncrementalChecker::new(t, ax);
    for (&b, &p) in assigned.iter().zip(fixed) {
        let ok = base.push(b, p as usize);
        debug_assert!(ok, "fixed part must be rationalizable");
    }
    if free.is_empty() {
        return Vec::new();
    }
    let first = free[0];
    let parts = exec.map_range(t.per_budget_counts()[first], |i| {
        let mut chk = base.clone();
        let mut out = Vec::new();
        if chk.push(first, i) {
            let mut cur = vec![0u32; t.n_budgets()];
            cur[first] = i as u32;
            crawl_into(t, &mut chk, free, 1, &mut cur, &mut out);
        }
        out
    });
    parts.concat()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Brute,
    #[default]
    Crawl,
    Decompose,
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "brute" | "brute-force" => Ok(Algorithm::Brute),
            "crawl" => Ok(Algorithm::Crawl),
            "decompose" => Ok(Algorithm::Decompose),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

pub fn enumerate_a(t: &PatchTable, ax: Axiom, alg: Algorithm, caps: &Caps, exec: Execution) -> Result<RationalMatrix> {
    match alg {
        Algorithm::Brute => brute_force_a(t, ax, caps, exec),
        Algorithm::Crawl => crawl_a(t, ax, exec),
        Algorithm::Decompose => decompose_a(t, ax, exec),
    }
}

#[cfg(test)]
mod tests;
