//! Facet description of `cone(A)` for small instances, in exact integer arithmetic.
//!
//! Facet normals are the extreme rays of the polar cone `{b in span(A) : A'b <= 0}`.
//! Writing `b = C y` for a basis `C` of `span(A)` drawn from the columns of `A` turns
//! this into the pointed cone `{y : A'C y <= 0}`, whose extreme rays come from the
//! double description method. The orthogonal complement of `span(A)` contributes
//! equality rows.

use rand::Rng;
use serde::Serialize;

use super::cone_membership;
use crate::enumerate::RationalMatrix;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub const MAX_ROWS: usize = 16;
pub const MAX_COLS: usize = 200;

/// `{t : B t <= 0}` with some rows flagged as parts of equalities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HRepresentation {
    /// Integer rows with relatively prime entries.
    pub rows: Vec<Vec<i64>>,
    /// True for rows that hold with equality on the whole cone. They come in
    /// `b, -b` pairs.
    pub equality: Vec<bool>,
}

impl HRepresentation {
    pub fn n_inequalities(&self) -> usize {
        self.equality.iter().filter(|e| !**e).count()
    }

    pub fn inequality_rows(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.rows.iter().zip(&self.equality).filter(|(_, e)| !**e).map(|(r, _)| r)
    }

    /// `B t`
    pub fn apply(&self, t: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().zip(t).map(|(&b, &x)| b as f64 * x).sum()).collect()
    }
}

fn overflow() -> Error {
    Error::Internal("integer overflow in exact facet computation".into())
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn normalize(v: &mut [i128]) {
    let g = v.iter().fold(0, |g, &x| gcd(g, x));
    if g > 1 {
        v.iter_mut().for_each(|x| *x /= g);
    }
}

fn dot(a: &[i128], b: &[i128]) -> Result<i128> {
    a.iter()
        .zip(b)
        .try_fold(0i128, |acc, (&x, &y)| x.checked_mul(y).and_then(|p| acc.checked_add(p)).ok_or_else(overflow))
}

/// Fraction-free Gauss-Jordan elimination. Returns the pivot columns and the final
/// pivot value; every pivot row ends with that value in its pivot column and every
/// other row has zero there.
fn bareiss_gauss_jordan(m: &mut [Vec<i128>]) -> Result<(Vec<usize>, i128)> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut prev: i128 = 1;
    let mut r = 0;
    let mut pivots = Vec::new();
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| m[i][c] != 0) else { continue };
        m.swap(p, r);
        let piv = m[r][c];
        for i in 0..rows {
            if i == r {
                continue;
            }
            let f = m[i][c];
            for j in 0..cols {
                let v = piv
                    .checked_mul(m[i][j])
                    .and_then(|x| f.checked_mul(m[r][j]).and_then(|y| x.checked_sub(y)))
                    .ok_or_else(overflow)?;
                if v % prev != 0 {
                    return Err(Error::Internal("inexact division in fraction-free elimination".into()));
                }
                m[i][j] = v / prev;
            }
        }
        prev = piv;
        pivots.push(c);
        r += 1;
    }
    Ok((pivots, prev))
}

/// Indices of a maximal linearly independent subset of `vectors`, greedily in order.
fn independent_subset(vectors: &[Vec<i128>]) -> Result<Vec<usize>> {
    if vectors.is_empty() {
        return Ok(Vec::new());
    }
    // Columns of the transposed system are the vectors.
    let n = vectors[0].len();
    let mut m: Vec<Vec<i128>> = (0..n).map(|i| vectors.iter().map(|v| v[i]).collect()).collect();
    Ok(bareiss_gauss_jordan(&mut m)?.0)
}

/// Integer basis of `{x : M x = 0}`.
fn null_space(m: &[Vec<i128>], n: usize) -> Result<Vec<Vec<i128>>> {
    let mut red = m.to_vec();
    let (pivots, d) = bareiss_gauss_jordan(&mut red)?;
    let mut out = Vec::new();
    for f in (0..n).filter(|c| !pivots.contains(c)) {
        let mut x = vec![0i128; n];
        x[f] = d;
        for (row, &pc) in pivots.iter().enumerate() {
            x[pc] = -red[row][f];
        }
        normalize(&mut x);
        out.push(x);
    }
    Ok(out)
}

/// Facets of `cone(A)` and equalities spanning the complement of `span(A)`.
pub fn h_representation(a: &RationalMatrix) -> Result<HRepresentation> {
    let (i, h) = (a.n_rows(), a.n_cols());
    if i > MAX_ROWS || h > MAX_COLS {
        return Err(Error::CapExceeded {
            what: "matrix size for facet enumeration",
            value: (i.max(h)) as u128,
            cap: if i > MAX_ROWS { MAX_ROWS as u128 } else { MAX_COLS as u128 },
            hint: "; facet enumeration is limited to I <= 16 and H <= 200",
        });
    }
    if h == 0 {
        return Err(Error::Validation("A has no columns".into()));
    }
    let cols: Vec<Vec<i128>> = (0..h)
        .map(|c| {
            let mut v = vec![0i128; i];
            for r in a.column_rows(c) {
                v[r] = 1;
            }
            v
        })
        .collect();
    let basis_idx = independent_subset(&cols)?;
    let basis: Vec<&Vec<i128>> = basis_idx.iter().map(|&c| &cols[c]).collect();
    let rank = basis.len();

    // M = A'C, one constraint row per column of A.
    let m: Vec<Vec<i128>> =
        cols.iter().map(|col| basis.iter().map(|b| dot(col, b)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    let rays = extreme_rays(&m, rank)?;

    let mut rows: Vec<Vec<i128>> = Vec::new();
    for y in rays {
        let mut b = vec![0i128; i];
        for (coef, col) in y.iter().zip(&basis) {
            for (bi, ci) in b.iter_mut().zip(col.iter()) {
                *bi = ci.checked_mul(*coef).and_then(|p| bi.checked_add(p)).ok_or_else(overflow)?;
            }
        }
        normalize(&mut b);
        rows.push(b);
    }
    rows.sort();
    let mut equality = vec![false; rows.len()];
    let basis_rows: Vec<Vec<i128>> = basis.iter().map(|b| b.to_vec()).collect();
    for v in null_space(&basis_rows, i)? {
        let neg: Vec<i128> = v.iter().map(|x| -x).collect();
        rows.push(v);
        rows.push(neg);
        equality.extend([true, true]);
    }
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().map(|x| i64::try_from(x).map_err(|_| overflow())).collect())
        .collect::<Result<_>>()?;
    Ok(HRepresentation { rows, equality })
}

struct Ray {
    y: Vec<i128>,
    /// Bitset of processed constraints that hold with equality.
    tight: Vec<u64>,
}

fn set_bit(s: &mut [u64], k: usize) {
    s[k / 64] |= 1 << (k % 64);
}

/// Extreme rays of the pointed cone `{y : M y <= 0}` with `rank(M) = r = dim y`.
fn extreme_rays(m: &[Vec<i128>], r: usize) -> Result<Vec<Vec<i128>>> {
    let words = m.len().div_ceil(64);
    // Start from r independent constraints: the rays of {y : M0 y <= 0} are the
    // columns of -M0^{-1}, up to positive scaling.
    let init = independent_subset(m)?;
    let mut aug: Vec<Vec<i128>> = init
        .iter()
        .enumerate()
        .map(|(k, &row)| {
            let mut v = m[row].clone();
            v.extend((0..r).map(|c| i128::from(c == k)));
            v
        })
        .collect();
    let (_, det) = bareiss_gauss_jordan(&mut aug)?;
    let sign = det.signum();
    let mut rays: Vec<Ray> = Vec::new();
    for c in 0..r {
        let mut y: Vec<i128> = aug.iter().map(|row| -sign * row[r + c]).collect();
        normalize(&mut y);
        rays.push(Ray { y, tight: vec![0; words] });
    }
    let mut processed: Vec<usize> = Vec::new();
    for &k in &init {
        processed.push(k);
        for ray in rays.iter_mut() {
            let v = dot(&m[k], &ray.y)?;
            debug_assert!(v <= 0);
            if v == 0 {
                set_bit(&mut ray.tight, k);
            }
        }
    }
    for k in 0..m.len() {
        if init.contains(&k) {
            continue;
        }
        let vals: Vec<i128> = rays.iter().map(|ray| dot(&m[k], &ray.y)).collect::<Result<_>>()?;
        let pos: Vec<usize> = (0..rays.len()).filter(|&q| vals[q] > 0).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&q| vals[q] < 0).collect();
        let mut next: Vec<Ray> = Vec::new();
        for &p in &pos {
            for &n in &neg {
                let common: Vec<u64> = rays[p].tight.iter().zip(&rays[n].tight).map(|(a, b)| a & b).collect();
                let size: u32 = common.iter().map(|w| w.count_ones()).sum();
                if (size as usize) + 2 < r {
                    continue;
                }
                let adjacent = !(0..rays.len())
                    .any(|q| q != p && q != n && rays[q].tight.iter().zip(&common).all(|(t, c)| t & c == *c));
                if !adjacent {
                    continue;
                }
                let mut y = Vec::with_capacity(r);
                for (a, b) in rays[n].y.iter().zip(&rays[p].y) {
                    let v = vals[p]
                        .checked_mul(*a)
                        .and_then(|x| vals[n].checked_mul(*b).and_then(|z| x.checked_sub(z)))
                        .ok_or_else(overflow)?;
                    y.push(v);
                }
                normalize(&mut y);
                let mut tight = common;
                set_bit(&mut tight, k);
                next.push(Ray { y, tight });
            }
        }
        for (q, ray) in rays.iter_mut().enumerate() {
            if vals[q] == 0 {
                set_bit(&mut ray.tight, k);
            }
        }
        let mut kept: Vec<Ray> = rays.into_iter().zip(&vals).filter(|(_, &v)| v <= 0).map(|(r, _)| r).collect();
        kept.extend(next);
        rays = kept;
        processed.push(k);
    }
    Ok(rays.into_iter().map(|r| r.y).collect())
}

/// Checks of the tightened-cone description for one `tau`.
#[derive(Debug, Clone, Serialize)]
pub struct TighteningReport {
    /// `-B A 1 / H`
    pub phi: Vec<f64>,
    /// Smallest `phi` over inequality rows; should be positive.
    pub min_inequality_phi: f64,
    /// Largest `|phi|` over equality rows; should be zero.
    pub max_equality_phi: f64,
    pub samples: usize,
    /// Sampled points where `B t <= -tau phi` and the direct membership test disagree.
    pub disagreements: usize,
}

impl TighteningReport {
    pub fn passed(&self) -> bool {
        self.min_inequality_phi > 0.0 && self.max_equality_phi <= 1e-12 && self.disagreements == 0
    }
}

/// Compare `{t : B t <= -tau phi}` with `{A nu : nu >= tau/H}` on random points.
pub fn verify_tightening(
    a: &RationalMatrix,
    b: &HRepresentation,
    tau: f64,
    samples: usize,
    seed: u64,
) -> Result<TighteningReport> {
    let (i, h) = (a.n_rows(), a.n_cols());
    let ones = vec![1.0; h];
    let a1: Vec<f64> = crate::conetest::ColumnOperator::apply(a, &ones);
    let phi: Vec<f64> = b.apply(&a1).into_iter().map(|v| -v / h as f64).collect();
    let min_inequality_phi =
        phi.iter().zip(&b.equality).filter(|(_, e)| !**e).map(|(p, _)| *p).fold(f64::INFINITY, f64::min);
    let max_equality_phi = phi.iter().zip(&b.equality).filter(|(_, e)| **e).map(|(p, _)| p.abs()).fold(0.0, f64::max);
    let lower = tau / h as f64;
    let mut rng = stream(seed, Purpose::Misc, 0);
    let mut disagreements = 0;
    for s in 0..samples {
        let t: Vec<f64> = match s % 3 {
            // Mostly inside the cone, some weights near the tightening bound.
            0 | 1 => {
                let nu: Vec<f64> = (0..h)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            rng.random_range(0.0..2.0 * lower + 1e-3)
                        } else {
                            rng.random::<f64>()
                        }
                    })
                    .collect();
                let mut t = crate::conetest::ColumnOperator::apply(a, &nu);
                if s % 3 == 1 {
                    for v in t.iter_mut() {
                        *v += rng.random_range(-0.05..0.05);
                    }
                }
                t
            }
            _ => (0..i).map(|_| rng.random_range(-0.2..1.0)).collect(),
        };
        let bt = b.apply(&t);
        let scale = t.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let by_facets = bt.iter().zip(&phi).all(|(v, p)| *v <= -tau * p + 1e-9 * scale);
        let mut shifted = t.clone();
        for v in shifted.iter_mut().zip(&a1) {
            *v.0 -= lower * v.1;
        }
        let direct = cone_membership(&shifted, a)?;
        if by_facets != direct {
            disagreements += 1;
        }
    }
    Ok(TighteningReport { phi, min_inequality_phi, max_equality_phi, samples, disagreements })
}
