use super::*;
use crate::geometry::{enumerate_patches, three_cyclic_budgets, two_crossing_budgets, BudgetSystem};
use crate::revpref::{is_rationalizable, ChoiceVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

fn table(b: &BudgetSystem, drop: bool) -> PatchTable {
    enumerate_patches(b, drop, 1e-9, Execution::Sequential).unwrap()
}

fn column_set(a: &RationalMatrix) -> BTreeSet<Vec<u8>> {
    (0..a.n_cols())
        .map(|h| {
            let mut v = vec![0u8; a.n_rows()];
            for r in a.column_rows(h) {
                v[r] = 1;
            }
            v
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Equal up to a relabelling of patches within each budget.
fn equal_up_to_block_permutation(a: &RationalMatrix, rows: &[Vec<u8>], blocks: &[usize]) -> bool {
    let target: BTreeSet<Vec<u8>> = (0..rows[0].len()).map(|h| rows.iter().map(|r| r[h]).collect()).collect();
    let mut choices: Vec<Vec<usize>> = vec![vec![]];
    for &n in blocks {
        let mut next = Vec::new();
        for prefix in &choices {
            for p in permutations(n) {
                let off = prefix.len();
                let mut q = prefix.clone();
                q.extend(p.iter().map(|i| i + off));
                next.push(q);
            }
        }
        choices = next;
    }
    let ours = column_set(a);
    choices.iter().any(|perm| {
        let mapped: BTreeSet<Vec<u8>> = ours.iter().map(|c| perm.iter().map(|&i| c[i]).collect()).collect();
        mapped == target
    })
}

fn random_budgets(rng: &mut impl Rng, j: usize, k: usize) -> BudgetSystem {
    BudgetSystem::from_prices(
        (0..j)
            .map(|_| {
                let s = rng.random_range(0.5..2.0);
                (0..k).map(|_| s * rng.random_range(0.6..1.4)).collect()
            })
            .collect(),
    )
    .unwrap()
}

fn caps() -> Caps {
    Caps::default()
}

#[test]
fn two_crossing_budgets_give_the_three_column_matrix() {
    let t = table(&two_crossing_budgets(), true);
    let displayed = vec![vec![1, 0, 0], vec![0, 1, 1], vec![0, 1, 0], vec![1, 0, 1]];
    for alg in [Algorithm::Brute, Algorithm::Crawl, Algorithm::Decompose] {
        let a = enumerate_a(&t, Axiom::Sarp, alg, &caps(), Execution::Parallel).unwrap();
        assert_eq!(a.n_cols(), 3);
        assert_eq!(a.n_rows(), 4);
        assert!(equal_up_to_block_permutation(&a, &displayed, &[2, 2]));
    }
    let a = crawl_a(&t, Axiom::Sarp, Execution::Sequential).unwrap();
    let both_below = [t.find(0, &[0, -1]).unwrap() - t.offsets()[0], t.find(1, &[-1, 0]).unwrap() - t.offsets()[1]];
    assert!(!a.contains(&[both_below[0] as u32, both_below[1] as u32]));
}

#[test]
fn three_cyclic_budgets_have_25_of_64() {
    let t = table(&three_cyclic_budgets(), true);
    let brute = brute_force_a(&t, Axiom::Sarp, &caps(), Execution::Sequential).unwrap();
    assert_eq!(brute.n_cols(), 25);
    assert_eq!(crawl_a(&t, Axiom::Sarp, Execution::Parallel).unwrap(), brute);
    assert_eq!(decompose_a(&t, Axiom::Sarp, Execution::Parallel).unwrap(), brute);
}

#[test]
fn nested_budgets_have_a_single_type() {
    let b = BudgetSystem::from_prices(vec![vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
    let t = table(&b, true);
    let a = brute_force_a(&t, Axiom::Sarp, &caps(), Execution::Sequential).unwrap();
    assert_eq!(a.to_rows(), vec![vec![1], vec![1]]);
    assert_eq!(decompose_a(&t, Axiom::Sarp, Execution::Sequential).unwrap(), a);
}

#[test]
fn chain_with_disjoint_ends_decomposes() {
    let b = BudgetSystem::from_prices(vec![vec![1.0, 1.0], vec![0.5, 3.0], vec![2.0, 2.0]]).unwrap();
    let inter = intersection_matrix(&table(&b, true)).unwrap();
    assert!(inter[0][1] && inter[1][2] && !inter[0][2]);
    for drop in [true, false] {
        let t = table(&b, drop);
        for ax in [Axiom::Sarp, Axiom::Garp] {
            let brute = brute_force_a(&t, ax, &caps(), Execution::Sequential).unwrap();
            assert_eq!(decompose_a(&t, ax, Execution::Sequential).unwrap(), brute);
        }
    }
}

#[test]
fn brute_force_respects_cap() {
    let t = table(&three_cyclic_budgets(), true);
    let small = Caps { brute_force: 63, ..Caps::default() };
    match brute_force_a(&t, Axiom::Sarp, &small, Execution::Sequential) {
        Err(Error::CapExceeded { value: 64, cap: 63, hint, .. }) => assert!(hint.contains("crawl")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn crawl_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..24 {
        let b = random_budgets(&mut rng, 5, 3);
        let drop = case % 3 != 0;
        let t = table(&b, drop);
        for ax in [Axiom::Sarp, Axiom::Garp] {
            let brute = brute_force_a(&t, ax, &caps(), Execution::Parallel).unwrap();
            let crawl = crawl_a(&t, ax, Execution::Parallel).unwrap();
            assert_eq!(crawl, brute, "case {case} {ax:?}");
            assert_eq!(crawl_a(&t, ax, Execution::Sequential).unwrap(), crawl);
        }
    }
}

#[test]
fn decompose_matches_crawl_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut with_split = 0;
    let mut case = 0;
    while with_split < 20 {
        case += 1;
        let b = random_budgets(&mut rng, 6, 3);
        let drop = case % 2 == 0;
        let t = table(&b, drop);
        let inter = intersection_matrix(&t).unwrap();
        if inter.iter().flatten().all(|&x| x) {
            continue;
        }
        with_split += 1;
        for ax in [Axiom::Sarp, Axiom::Garp] {
            let crawl = crawl_a(&t, ax, Execution::Parallel).unwrap();
            let dec = decompose_a(&t, ax, Execution::Parallel).unwrap();
            assert_eq!(dec, crawl, "case {case} drop={drop} {ax:?}");
        }
    }
}

#[test]
fn columns_are_exactly_the_rationalizable_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..8 {
        let b = random_budgets(&mut rng, 4, 3);
        let t = table(&b, case % 2 == 0);
        for ax in [Axiom::Sarp, Axiom::Garp] {
            let a = crawl_a(&t, ax, Execution::Sequential).unwrap();
            let counts = t.per_budget_counts();
            let total: usize = counts.iter().product();
            let mut found = 0;
            for idx in 0..total {
                let mut rem = idx;
                let mut picks = vec![0usize; counts.len()];
                for j in (0..counts.len()).rev() {
                    picks[j] = rem % counts[j];
                    rem /= counts[j];
                }
                let ok = is_rationalizable(&ChoiceVector::complete(&picks), &t, ax).unwrap();
                let p32: Vec<u32> = picks.iter().map(|&p| p as u32).collect();
                assert_eq!(a.contains(&p32), ok);
                found += usize::from(ok);
            }
            assert_eq!(found, a.n_cols());
            for h in 0..a.n_cols() {
                let rows: Vec<usize> = a.column_rows(h).collect();
                for j in 0..counts.len() {
                    let o = a.offsets()[j];
                    assert_eq!(rows.iter().filter(|&&r| r >= o && r < o + counts[j]).count(), 1);
                }
            }
        }
    }
}

#[test]
fn enumerated_matrices_are_acute() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..6 {
        let b = random_budgets(&mut rng, 4, 3);
        let t = table(&b, case % 2 == 0);
        let a = crawl_a(&t, Axiom::Sarp, Execution::Sequential).unwrap();
        assert_eq!(a.find_obtuse_triplet(100, 100_000, &mut rng), None);
    }
    let a = crawl_a(&table(&three_cyclic_budgets(), true), Axiom::Sarp, Execution::Sequential).unwrap();
    assert_eq!(a.find_obtuse_triplet(100, 0, &mut rng), None);
}

#[test]
fn three_item_menus_give_the_six_column_matrix() {
    let pairs = all_pairs(3);
    assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 0)]);
    let a = binary_menu_a(3, &pairs, &caps()).unwrap();
    let displayed: Vec<Vec<u8>> = vec![
        vec![1, 1, 1, 0, 0, 0],
        vec![0, 0, 0, 1, 1, 1],
        vec![1, 0, 0, 1, 1, 0],
        vec![0, 1, 1, 0, 0, 1],
        vec![0, 1, 0, 1, 0, 1],
        vec![1, 0, 1, 0, 1, 0],
    ];
    assert_eq!(a.to_rows(), displayed);
}

#[test]
fn two_items_one_menu() {
    let a = binary_menu_a(2, &[(0, 1)], &caps()).unwrap();
    assert_eq!(a.to_rows(), vec![vec![1, 0], vec![0, 1]]);
}

#[test]
fn four_item_menus_satisfy_triangle_conditions() {
    let pairs = all_pairs(4);
    assert_eq!(pairs.len(), 6);
    let a = binary_menu_a(4, &pairs, &caps()).unwrap();
    assert_eq!(a.n_cols(), 24);
    let prob = |h: usize, x: usize, y: usize| -> u32 {
        let m = pairs.iter().position(|&(p, q)| (p, q) == (x, y) || (p, q) == (y, x)).unwrap();
        let chosen = a.column(h)[m] as usize;
        let winner = if chosen == 0 { pairs[m].0 } else { pairs[m].1 };
        u32::from(winner == x)
    };
    for h in 0..24 {
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    if x != y && y != z && x != z {
                        assert!(prob(h, x, y) + prob(h, y, z) + prob(h, z, x) <= 2);
                    }
                }
            }
        }
    }
}

#[test]
fn binary_menu_errors() {
    assert!(matches!(binary_menu_a(9, &[(0, 1)], &caps()), Err(Error::CapExceeded { .. })));
    assert!(binary_menu_a(3, &[(0, 1), (1, 0)], &caps()).is_err());
    assert!(binary_menu_a(3, &[(0, 3)], &caps()).is_err());
    assert!(binary_menu_a(1, &[], &caps()).is_err());
}

#[test]
fn a_file_round_trip() {
    let t = table(&three_cyclic_budgets(), true);
    let a = crawl_a(&t, Axiom::Sarp, Execution::Sequential).unwrap();
    let mut buf = Vec::new();
    write_a_file(&a, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("12 25\n"));
    let back = read_a_file(&buf[..], t.per_budget_counts(), Axiom::Sarp).unwrap();
    assert_eq!(back, a);
    assert!(read_a_file(&b"12 2\n1 1 1\n"[..], t.per_budget_counts(), Axiom::Sarp).is_err());
    assert!(read_a_file(&b"11 1\n1 1 1\n"[..], t.per_budget_counts(), Axiom::Sarp).is_err());
    assert!(read_a_file(&b"12 1\n1 5 1\n"[..], t.per_budget_counts(), Axiom::Sarp).is_err());
    let mut dense = Vec::new();
    write_dense_csv(&a, &mut dense).unwrap();
    let dense = String::from_utf8(dense).unwrap();
    assert_eq!(dense.lines().count(), 12);
    assert_eq!(dense.lines().next().unwrap().split(',').count(), 25);
}
