//! Choice over two-element menus drawn from a finite set of items.

use std::collections::BTreeSet;

use super::{Caps, RationalMatrix};
use crate::error::{validation, Error, Result};
use crate::revpref::Axiom;

/// All unordered pairs of `n` items, by increasing cyclic distance: `(i, i+1 mod n)`
/// for every `i`, then distance two, and so on. For three items this is
/// `(a,b), (b,c), (c,a)`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for d in 1..n {
        for i in 0..n {
            let j = (i + d) % n;
            if seen.insert((i.min(j), i.max(j))) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Columns induced by every strict ranking of the items, deduplicated. Each menu
/// `(a, b)` contributes two rows: `a` chosen, then `b` chosen.
pub fn binary_menu_a(n_items: usize, menus: &[(usize, usize)], caps: &Caps) -> Result<RationalMatrix> {
    if n_items < 2 {
        return validation("need at least two items");
    }
    if n_items > caps.binary_items {
        return Err(Error::CapExceeded {
            what: "number of items",
            value: n_items as u128,
            cap: caps.binary_items as u128,
            hint: "; the number of rankings grows factorially",
        });
    }
    if menus.is_empty() {
        return validation("no menus");
    }
    let mut seen = BTreeSet::new();
    for &(a, b) in menus {
        if a >= n_items || b >= n_items || a == b {
            return validation(format!("invalid menu ({}, {})", a + 1, b + 1));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return validation(format!("menu ({}, {}) listed twice", a + 1, b + 1));
        }
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut rank = vec![0usize; n_items];
    let mut cols = BTreeSet::new();
    loop {
        for (r, &item) in order.iter().enumerate() {
            rank[item] = r;
        }
        let col: Vec<u32> = menus.iter().map(|&(a, b)| u32::from(rank[b] < rank[a])).collect();
        cols.insert(col);
        if !next_permutation(&mut order) {
            break;
        }
    }
    RationalMatrix::from_columns(vec![2; menus.len()], cols.into_iter().collect(), Axiom::Sarp)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    let Some(i) = (1..n).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..n).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
