//! Revealed preference over chosen patches.
//!
//! Choosing patch `x` from budget `j` reveals `x` preferred to every chosen patch
//! that lies on or below budget `j`: strictly when below, weakly when on it. Only
//! chosen patches can lie on a cycle, so graphs have at most one node per budget
//! and fit in `u64` bitmasks.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::geometry::PatchTable;

/// Graphs are stored as bitmasks, which caps the number of budgets.
pub const MAX_BUDGETS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    #[default]
    Sarp,
    Garp,
}

impl std::str::FromStr for Axiom {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sarp" => Ok(Axiom::Sarp),
            "garp" => Ok(Axiom::Garp),
            other => Err(format!("unknown axiom {other:?} (expected sarp or garp)")),
        }
    }
}

/// Per-budget picks; `None` leaves a budget unassigned.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChoiceVector {
    pub picks: Vec<Option<usize>>,
}

impl ChoiceVector {
    pub fn empty(n_budgets: usize) -> Self {
        ChoiceVector { picks: vec![None; n_budgets] }
    }

    pub fn complete(picks: &[usize]) -> Self {
        ChoiceVector { picks: picks.iter().map(|&p| Some(p)).collect() }
    }

    pub fn is_complete(&self) -> bool {
        self.picks.iter().all(Option::is_some)
    }

    pub fn validate(&self, t: &PatchTable) -> Result<()> {
        if self.picks.len() != t.n_budgets() {
            return validation(format!("choice vector has {} budgets, table has {}", self.picks.len(), t.n_budgets()));
        }
        if t.n_budgets() > MAX_BUDGETS {
            return validation(format!("at most {MAX_BUDGETS} budgets are supported"));
        }
        for (j, p) in self.picks.iter().enumerate() {
            if let Some(i) = p {
                if *i >= t.per_budget_counts()[j] {
                    return validation(format!("pick {} on budget {} out of range", i + 1, j + 1));
                }
            }
        }
        Ok(())
    }

    /// The implied 0/1 vector of length `I`.
    pub fn as_binary(&self, t: &PatchTable) -> Vec<u8> {
        let mut a = vec![0u8; t.len()];
        for (j, p) in self.picks.iter().enumerate() {
            if let Some(i) = p {
                a[t.global_index(j, *i)] = 1;
            }
        }
        a
    }
}

/// A directly revealed preference between the choices on two budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub strict: bool,
}

/// Edge `j -> k` iff the patch chosen on `k` is on (weak) or below (strict) budget `j`.
pub fn revealed_edges(c: &ChoiceVector, t: &PatchTable) -> Result<Vec<Edge>> {
    c.validate(t)?;
    let chosen: Vec<(usize, usize)> =
        c.picks.iter().enumerate().filter_map(|(j, p)| p.map(|i| (j, t.global_index(j, i)))).collect();
    let mut edges = Vec::new();
    for &(j, _) in &chosen {
        for &(k, gk) in &chosen {
            if j == k {
                continue;
            }
            let s = t.sign(gk, j);
            if s <= 0 {
                edges.push(Edge { from: j, to: k, strict: s < 0 });
            }
        }
    }
    Ok(edges)
}

/// Adjacency bitmasks over budgets.
#[derive(Debug, Clone, Default)]
struct Graph {
    all: Vec<u64>,
    strict: Vec<u64>,
}

impl Graph {
    fn from_edges(n: usize, edges: &[Edge]) -> Self {
        let mut g = Graph { all: vec![0; n], strict: vec![0; n] };
        for e in edges {
            g.all[e.from] |= 1 << e.to;
            if e.strict {
                g.strict[e.from] |= 1 << e.to;
            }
        }
        g
    }
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Is the (possibly partial) choice vector consistent with the axiom?
///
/// SARP rejects any cycle; GARP rejects only cycles that contain a strict edge.
/// Uses depth-first search.
pub fn is_rationalizable(c: &ChoiceVector, t: &PatchTable, ax: Axiom) -> Result<bool> {
    let edges = revealed_edges(c, t)?;
    let g = Graph::from_edges(c.picks.len(), &edges);
    Ok(match ax {
        Axiom::Sarp => !dfs_has_cycle(&g.all),
        Axiom::Garp => !dfs_strict_edge_on_cycle(&g),
    })
}

/// Same decision as [`is_rationalizable`], computed from the Floyd-Warshall closure.
pub fn is_rationalizable_floyd_warshall(c: &ChoiceVector, t: &PatchTable, ax: Axiom) -> Result<bool> {
    let edges = revealed_edges(c, t)?;
    let n = c.picks.len();
    let mut reach = vec![vec![false; n]; n];
    for e in &edges {
        reach[e.from][e.to] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    Ok(match ax {
        Axiom::Sarp => !(0..n).any(|i| reach[i][i]),
        Axiom::Garp => !edges.iter().any(|e| e.strict && reach[e.to][e.from]),
    })
}

fn dfs_has_cycle(adj: &[u64]) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = adj.len();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack: Vec<(usize, u64)> = vec![(root, adj[root])];
        mark[root] = Mark::Open;
        while let Some((v, rest)) = stack.last_mut() {
            if *rest == 0 {
                mark[*v] = Mark::Done;
                stack.pop();
                continue;
            }
            let w = rest.trailing_zeros() as usize;
            *rest &= *rest - 1;
            match mark[w] {
                Mark::Open => return true,
                Mark::New => {
                    mark[w] = Mark::Open;
                    stack.push((w, adj[w]));
                }
                Mark::Done => {}
            }
        }
    }
    false
}

fn reach_from(adj: &[u64], start: usize) -> u64 {
    let mut seen = 1u64 << start;
    let mut frontier = seen;
    while frontier != 0 {
        let mut next = 0;
        for v in bits(frontier) {
            next |= adj[v];
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen
}

fn dfs_strict_edge_on_cycle(g: &Graph) -> bool {
    (0..g.all.len()).any(|u| bits(g.strict[u]).any(|v| reach_from(&g.all, v) & (1 << u) != 0))
}

/// Fast check for a complete pick tuple (within-budget indices), without validation.
pub fn picks_are_rationalizable(t: &PatchTable, picks: &[u32], ax: Axiom) -> bool {
    let n = picks.len();
    debug_assert!(n <= MAX_BUDGETS);
    let chosen: Vec<usize> = (0..n).map(|j| t.global_index(j, picks[j] as usize)).collect();
    let mut g = Graph { all: vec![0; n], strict: vec![0; n] };
    for j in 0..n {
        for (k, &gk) in chosen.iter().enumerate() {
            if j == k {
                continue;
            }
            let s = t.sign(gk, j);
            if s <= 0 {
                g.all[j] |= 1 << k;
                if s < 0 {
                    g.strict[j] |= 1 << k;
                }
            }
        }
    }
    match ax {
        Axiom::Sarp => !dfs_has_cycle(&g.all),
        Axiom::Garp => !dfs_strict_edge_on_cycle(&g),
    }
}

/// Incremental rationalizability check for depth-first enumeration.
///
/// Budgets are assigned one at a time; each push only searches for cycles through
/// the newly added node, which suffices when the previous state was consistent.
#[derive(Debug, Clone)]
pub struct IncrementalChecker<'a> {
    table: &'a PatchTable,
    axiom: Axiom,
    chosen: Vec<usize>,
    assigned: u64,
    out_all: Vec<u64>,
    out_strict: Vec<u64>,
    in_all: Vec<u64>,
}

impl<'a> IncrementalChecker<'a> {
    pub fn new(table: &'a PatchTable, axiom: Axiom) -> Self {
        let n = table.n_budgets();
        assert!(n <= MAX_BUDGETS, "at most {MAX_BUDGETS} budgets are supported");
        IncrementalChecker {
            table,
            axiom,
            chosen: vec![usize::MAX; n],
            assigned: 0,
            out_all: vec![0; n],
            out_strict: vec![0; n],
            in_all: vec![0; n],
        }
    }

    pub fn pick(&self, budget: usize) -> Option<usize> {
        (self.assigned & (1 << budget) != 0).then(|| self.chosen[budget] - self.table.offsets()[budget])
    }

    /// Assign `within` on `budget`. Returns false (and leaves the state unchanged)
    /// if the extended choice is not rationalizable.
    pub fn push(&mut self, budget: usize, within: usize) -> bool {
        debug_assert!(self.assigned & (1 << budget) == 0);
        let t = self.table;
        let g = t.global_index(budget, within);
        let bj = 1u64 << budget;
        for k in bits(self.assigned) {
            let gk = self.chosen[k];
            let bk = 1u64 << k;
            let s = t.sign(gk, budget);
            if s <= 0 {
                self.out_all[budget] |= bk;
                self.in_all[k] |= bj;
                if s < 0 {
                    self.out_strict[budget] |= bk;
                }
            }
            let s = t.sign(g, k);
            if s <= 0 {
                self.out_all[k] |= bj;
                self.in_all[budget] |= bk;
                if s < 0 {
                    self.out_strict[k] |= bj;
                }
            }
        }
        self.chosen[budget] = g;
        self.assigned |= bj;
        if self.violates_through(budget) {
            self.pop(budget);
            false
        } else {
            true
        }
    }

    pub fn pop(&mut self, budget: usize) {
        let mask = !(1u64 << budget);
        for k in bits(self.assigned) {
            self.out_all[k] &= mask;
            self.out_strict[k] &= mask;
            self.in_all[k] &= mask;
        }
        self.out_all[budget] = 0;
        self.out_strict[budget] = 0;
        self.in_all[budget] = 0;
        self.assigned &= mask;
        self.chosen[budget] = usize::MAX;
    }

    fn violates_through(&self, v: usize) -> bool {
        let fwd = reach_from(&self.out_all, v);
        let bwd = reach_from(&self.in_all, v);
        let edges = match self.axiom {
            Axiom::Sarp => &self.out_all,
            Axiom::Garp => &self.out_strict,
        };
        bits(fwd).any(|u| edges[u] & bwd != 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::geometry::{enumerate_patches, three_cyclic_budgets, two_crossing_budgets, BudgetSystem};
    use rand::{Rng, SeedableRng};

    fn table(b: &BudgetSystem, drop: bool) -> PatchTable {
        enumerate_patches(b, drop, 1e-9, Execution::Sequential).unwrap()
    }

    #[test]
    fn two_below_patches_form_a_strict_two_cycle() {
        let t = table(&two_crossing_budgets(), true);
        let c = ChoiceVector::complete(&[0, 0]);
        let e = revealed_edges(&c, &t).unwrap();
        assert_eq!(e.len(), 2);
        assert!(e.iter().all(|e| e.strict));
        assert!(!is_rationalizable(&c, &t, Axiom::Sarp).unwrap());
        assert_eq!(c.as_binary(&t), vec![1, 0, 1, 0]);
        assert!(is_rationalizable(&ChoiceVector::complete(&[0, 1]), &t, Axiom::Sarp).unwrap());
    }

    #[test]
    fn single_pick_has_no_edges() {
        let t = table(&three_cyclic_budgets(), true);
        let c = ChoiceVector { picks: vec![None, Some(2), None] };
        assert!(revealed_edges(&c, &t).unwrap().is_empty());
        assert!(is_rationalizable(&c, &t, Axiom::Sarp).unwrap());
        assert!(is_rationalizable(&c, &t, Axiom::Garp).unwrap());
    }

    #[test]
    fn warp_compatible_three_cycle() {
        let b = three_cyclic_budgets();
        let t = table(&b, true);
        let q = [[1.0, 0.5, 1.5], [1.5, 1.0, 0.5], [0.5, 1.5, 1.0]];
        let picks: Vec<usize> = (0..3)
            .map(|j| {
                let g = crate::geometry::classify_bundle(&q[j], j, &t, 1e-8).unwrap();
                t.patch(g).within_budget_index
            })
            .collect();
        let c = ChoiceVector::complete(&picks);
        let e = revealed_edges(&c, &t).unwrap();
        assert_eq!(e.len(), 3);
        assert!(e.iter().all(|e| e.strict));
        for e1 in &e {
            assert!(!e.iter().any(|e2| e2.from == e1.to && e2.to == e1.from));
        }
        assert!(!is_rationalizable(&c, &t, Axiom::Sarp).unwrap());
        assert!(!is_rationalizable_floyd_warshall(&c, &t, Axiom::Sarp).unwrap());
    }

    #[test]
    fn weak_cycles_pass_garp_but_not_sarp() {
        let t = table(&two_crossing_budgets(), false);
        let mid = t.find(0, &[0, 0]).unwrap() - t.offsets()[0];
        let mid2 = t.find(1, &[0, 0]).unwrap() - t.offsets()[1];
        let c = ChoiceVector::complete(&[mid, mid2]);
        assert!(revealed_edges(&c, &t).unwrap().iter().all(|e| !e.strict));
        assert!(is_rationalizable(&c, &t, Axiom::Garp).unwrap());
        assert!(!is_rationalizable(&c, &t, Axiom::Sarp).unwrap());
    }

    fn random_budgets(rng: &mut impl Rng, j: usize, k: usize) -> BudgetSystem {
        BudgetSystem::from_prices((0..j).map(|_| (0..k).map(|_| rng.random_range(0.5..2.0)).collect()).collect())
            .unwrap()
    }

    #[test]
    fn dfs_and_floyd_warshall_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 10_000 {
            let (nj, nk) = (rng.random_range(2..6), rng.random_range(2..4));
            let b = random_budgets(&mut rng, nj, nk);
            let drop = rng.random_bool(0.5);
            let t = table(&b, drop);
            for _ in 0..200 {
                let picks = (0..b.len())
                    .map(|j| {
                        let n = t.per_budget_counts()[j];
                        if rng.random_bool(0.8) {
                            Some(rng.random_range(0..n))
                        } else {
                            None
                        }
                    })
                    .collect();
                let c = ChoiceVector { picks };
                for ax in [Axiom::Sarp, Axiom::Garp] {
                    assert_eq!(
                        is_rationalizable(&c, &t, ax).unwrap(),
                        is_rationalizable_floyd_warshall(&c, &t, ax).unwrap()
                    );
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn incremental_matches_batch_and_rejection_is_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let nj = rng.random_range(2..6);
            let b = random_budgets(&mut rng, nj, 3);
            let drop = rng.random_bool(0.5);
            let t = table(&b, drop);
            let ax = if rng.random_bool(0.5) { Axiom::Sarp } else { Axiom::Garp };
            let mut inc = IncrementalChecker::new(&t, ax);
            let mut c = ChoiceVector::empty(b.len());
            let mut order: Vec<usize> = (0..b.len()).collect();
            order.sort_by_key(|_| rng.random::<u32>());
            let mut failed = false;
            for &j in &order {
                let pick = rng.random_range(0..t.per_budget_counts()[j]);
                c.picks[j] = Some(pick);
                let batch = is_rationalizable(&c, &t, ax).unwrap();
                if failed {
                    assert!(!batch, "completion of a rejected vector accepted");
                    continue;
                }
                let ok = inc.push(j, pick);
                assert_eq!(ok, batch);
                if !ok {
                    failed = true;
                    assert_eq!(inc.pick(j), None);
                }
            }
        }
    }

    #[test]
    fn garp_equals_sarp_without_intersections() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let b = random_budgets(&mut rng, 4, 3);
            let t = table(&b, true);
            for _ in 0..50 {
                let picks: Vec<usize> = (0..4).map(|j| rng.random_range(0..t.per_budget_counts()[j])).collect();
                let c = ChoiceVector::complete(&picks);
                assert_eq!(
                    is_rationalizable(&c, &t, Axiom::Sarp).unwrap(),
                    is_rationalizable(&c, &t, Axiom::Garp).unwrap()
                );
            }
        }
    }
}
