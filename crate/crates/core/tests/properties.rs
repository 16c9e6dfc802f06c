//! Property tests for invariants that should hold on any input.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rumcone::conetest::{cone_membership, jn_statistic, nnls_project, project, recentered_draw, PiVector, Weighting};
use rumcone::counterfactual::{drop_block, Counterfactual, Quantity};
use rumcone::enumerate::{brute_force_a, crawl_a, decompose_a, Caps, RationalMatrix};
use rumcone::estimate::{freq_classified, series_classified, trim, ClassifiedPeriod, SeriesSpec};
use rumcone::geometry::{classify_bundle, enumerate_patches, patch_extrema, BudgetSystem, PatchTable};
use rumcone::revpref::{is_rationalizable, is_rationalizable_floyd_warshall, Axiom, ChoiceVector};
use rumcone::simulate::{sample_mixture, MixtureDgp};
use rumcone::Execution;

const TOL: f64 = 1e-9;

/// `j` budgets over `k` goods with prices close enough that most pairs cross.
fn budgets(
    j: std::ops::RangeInclusive<usize>,
    k: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = BudgetSystem> {
    (j, k).prop_flat_map(|(j, k)| {
        prop::collection::vec((0.5f64..2.0, prop::collection::vec(0.6f64..1.4, k)), j).prop_map(|rows| {
            BudgetSystem::from_prices(rows.into_iter().map(|(s, p)| p.into_iter().map(|x| s * x).collect()).collect())
                .unwrap()
        })
    })
}

fn setup(b: &BudgetSystem, drop: bool) -> (PatchTable, RationalMatrix) {
    let t = enumerate_patches(b, drop, TOL, Execution::Sequential).unwrap();
    let a = crawl_a(&t, Axiom::Sarp, Execution::Sequential).unwrap();
    (t, a)
}

/// A random point of budget `j`: uniform weights on the vertices `e_k / p_k`.
fn point_on_budget(b: &BudgetSystem, j: usize, rng: &mut impl Rng) -> Vec<f64> {
    let p = b.price(j);
    let g: Vec<f64> = p.iter().map(|_| -rng.random::<f64>().ln()).collect();
    let s: f64 = g.iter().sum();
    g.iter().zip(p).map(|(w, pk)| w / s / pk).collect()
}

fn population(seed: u64, h: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nu: Vec<f64> = (0..h).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random() }).collect();
    nu[0] += 0.1;
    let s: f64 = nu.iter().sum();
    nu.iter().map(|v| v / s).collect()
}

fn implied(a: &RationalMatrix, nu: &[f64]) -> Vec<f64> {
    let mut pi = vec![0.0; a.n_rows()];
    for (h, w) in nu.iter().enumerate() {
        a.column_rows(h).for_each(|r| pi[r] += w);
    }
    pi
}

fn random_pi(a: &RationalMatrix, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    a.block_sizes()
        .iter()
        .flat_map(|&n| {
            let g: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = g.iter().sum();
            g.into_iter().map(move |v| v / s).collect::<Vec<_>>()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn representatives_classify_to_their_own_patch(b in budgets(1..=4, 2..=4), drop in any::<bool>()) {
        let t = enumerate_patches(&b, drop, TOL, Execution::Sequential).unwrap();
        for (g, p) in t.patches().iter().enumerate() {
            prop_assert_eq!(classify_bundle(&p.representative, p.budget, &t, 1e-8).unwrap(), g);
            prop_assert_eq!(p.sign[p.budget], 0);
        }
        let bound = if drop { 2usize } else { 3 }.pow(b.len() as u32 - 1);
        prop_assert!(t.per_budget_counts().iter().all(|&n| n >= 1 && n <= bound));
    }

    #[test]
    fn every_point_falls_in_exactly_one_patch(b in budgets(2..=4, 2..=3), seed in any::<u64>()) {
        let t = enumerate_patches(&b, true, TOL, Execution::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let j = rng.random_range(0..b.len());
            let y = point_on_budget(&b, j, &mut rng);
            if (0..b.len()).any(|k| k != j && b.excess(k, &y).abs() < 1e-6) {
                continue;
            }
            let sign: Vec<i8> = (0..b.len())
                .map(|k| if k == j { 0 } else if b.excess(k, &y) < 0.0 { -1 } else { 1 })
                .collect();
            let matches = (0..t.per_budget_counts()[j])
                .filter(|&i| t.patch(t.global_index(j, i)).sign == sign)
                .count();
            prop_assert_eq!(matches, 1);
            let g = classify_bundle(&y, j, &t, 1e-8).unwrap();
            for k in 0..b.goods() {
                let (lo, hi) = patch_extrema(&t, g, k).unwrap();
                prop_assert!(lo - 1e-9 <= y[k] && y[k] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn cycle_detectors_agree(b in budgets(2..=5, 2..=3), drop in any::<bool>(), seed in any::<u64>()) {
        let t = enumerate_patches(&b, drop, TOL, Execution::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let picks: Vec<Option<usize>> = t
                .per_budget_counts()
                .iter()
                .map(|&n| if rng.random_bool(0.8) { Some(rng.random_range(0..n)) } else { None })
                .collect();
            let c = ChoiceVector { picks };
            for ax in [Axiom::Sarp, Axiom::Garp] {
                let dfs = is_rationalizable(&c, &t, ax).unwrap();
                prop_assert_eq!(dfs, is_rationalizable_floyd_warshall(&c, &t, ax).unwrap());
                // Filling in an unassigned budget never repairs a violation.
                if !dfs {
                    if let Some(j) = c.picks.iter().position(Option::is_none) {
                        let mut more = c.clone();
                        more.picks[j] = Some(0);
                        prop_assert!(!is_rationalizable(&more, &t, ax).unwrap());
                    }
                }
            }
            if drop {
                prop_assert_eq!(
                    is_rationalizable(&c, &t, Axiom::Sarp).unwrap(),
                    is_rationalizable(&c, &t, Axiom::Garp).unwrap()
                );
            }
        }
    }

    #[test]
    fn enumeration_algorithms_agree(b in budgets(1..=4, 2..=4), drop in any::<bool>()) {
        let t = enumerate_patches(&b, drop, TOL, Execution::Sequential).unwrap();
        let crawl = crawl_a(&t, Axiom::Sarp, Execution::Sequential).unwrap();
        prop_assert_eq!(&decompose_a(&t, Axiom::Sarp, Execution::Parallel).unwrap(), &crawl);
        prop_assert_eq!(&brute_force_a(&t, Axiom::Sarp, &Caps::default(), Execution::Sequential).unwrap(), &crawl);
        let product: usize = t.per_budget_counts().iter().product();
        prop_assert!(crawl.n_cols() <= product);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        prop_assert_eq!(crawl.find_obtuse_triplet(60, 20_000, &mut rng), None);
    }

    #[test]
    fn projection_properties(b in budgets(2..=3, 2..=3), seed in any::<u64>(), c in 0.1f64..10.0) {
        let (_, a) = setup(&b, true);
        let target = if seed % 2 == 0 { implied(&a, &population(seed, a.n_cols())) } else { random_pi(&a, seed) };
        let p = PiVector::new(target.clone(), a.block_sizes().to_vec(), vec![50; a.n_budgets()]).unwrap();
        let id = Weighting::identity(a.n_rows());
        let base = nnls_project(&p, &a, &id, 0.0).unwrap();
        let jn = jn_statistic(&p, &a, &id).unwrap();
        prop_assert!(jn >= 0.0);
        prop_assert_eq!(jn == 0.0, cone_membership(&target, &a).unwrap());

        // KKT: the gradient is nonnegative and complementary to nu.
        let resid: Vec<f64> = base.eta.iter().zip(&target).map(|(e, t)| e - t).collect();
        for h in 0..a.n_cols() {
            let grad: f64 = 2.0 * a.column_rows(h).map(|r| resid[r]).sum::<f64>();
            prop_assert!(grad >= -1e-8, "gradient {}", grad);
            prop_assert!((base.nu[h] * grad).abs() <= 1e-8);
        }

        // Scaling the weights scales the objective and leaves the projection alone.
        let scaled = nnls_project(&p, &a, &Weighting::new(vec![c; a.n_rows()]).unwrap(), 0.0).unwrap();
        prop_assert!((scaled.objective - c * base.objective).abs() <= 1e-9 * (1.0 + c * base.objective));
        for (x, y) in scaled.eta.iter().zip(&base.eta) {
            prop_assert!((x - y).abs() <= 1e-7);
        }

        // Tightening can only raise the objective.
        let mut last = base.objective;
        for tau in [0.01, 0.05, 0.2] {
            let o = project(&a, &target, &vec![1.0; a.n_rows()], tau / a.n_cols() as f64).unwrap().objective;
            prop_assert!(o >= last - 1e-12);
            last = o;
        }
    }

    #[test]
    fn recentering_preserves_mean_deviation(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pihat: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let draws: Vec<Vec<f64>> = (0..20).map(|_| (0..n).map(|_| rng.random()).collect()).collect();
        for i in 0..n {
            let lhs: f64 = draws.iter().map(|d| recentered_draw(d, &pihat, &eta)[i] - eta[i]).sum::<f64>() / 20.0;
            let rhs: f64 = draws.iter().map(|d| d[i] - pihat[i]).sum::<f64>() / 20.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn estimates_are_probabilities(seed in any::<u64>(), n in 5usize..200, order in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let periods: Vec<ClassifiedPeriod> = (0..2)
            .map(|_| {
                let patch: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
                let w: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                ClassifiedPeriod { patch, w, z: None, n_patches: 3 }
            })
            .collect();
        let f = freq_classified(&periods).unwrap();
        for s in f.pi.block_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-15);
        }
        let spec = SeriesSpec { order, ..Default::default() };
        if let Ok(est) = series_classified(&periods, &spec, Execution::Sequential) {
            prop_assert!(est.pi.values().iter().all(|v| (0.0..=1.0).contains(v)));
            for v in &est.variances {
                prop_assert!((v - v.transpose()).amax() <= 1e-10);
                let eig = v.clone().symmetric_eigen().eigenvalues;
                prop_assert!(eig.iter().all(|&e| e >= -1e-10));
            }
        }
    }

    #[test]
    fn trimming_is_monotone_and_bounded(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, u in 0.01f64..0.49) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(trim(lo, u) <= trim(hi, u) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&trim(lo, u)));
        if (u..=1.0 - u).contains(&lo) {
            prop_assert_eq!(trim(lo, u), lo);
        }
    }

    #[test]
    fn bounds_contain_the_truth(b in budgets(2..=3, 2..=3), seed in any::<u64>()) {
        let (t, a) = setup(&b, true);
        let nu = population(seed, a.n_cols());
        let pi = implied(&a, &nu);
        let target = (seed % b.len() as u64) as usize;
        let obs = drop_block(&pi, a.block_sizes(), target).unwrap();
        let cf = Counterfactual::new(&a, &t, target, &obs, false).unwrap();
        let o = a.offsets()[target];
        for i in 0..a.block_sizes()[target] {
            let bd = cf.bound(&Quantity::PatchProb(i)).unwrap();
            prop_assert!(bd.lower <= bd.upper + 1e-12);
            prop_assert!(bd.lower - 1e-9 <= pi[o + i] && pi[o + i] <= bd.upper + 1e-9);
        }
        let zs: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
        let grid = cf.cdf_grid(0, &zs, Execution::Sequential).unwrap();
        for w in grid.windows(2) {
            prop_assert!(w[0].lower <= w[1].lower + 1e-9 && w[0].upper <= w[1].upper + 1e-9);
        }
    }

    #[test]
    fn simulation_ignores_the_execution_mode(b in budgets(2..=3, 2..=3), seed in any::<u64>()) {
        let (_, a) = setup(&b, true);
        let nu = population(seed, a.n_cols());
        let dgp = MixtureDgp::new(&a, &nu, vec![40; a.n_budgets()], seed).unwrap();
        prop_assert_eq!(sample_mixture(&dgp, Execution::Sequential).unwrap(), sample_mixture(&dgp, Execution::Parallel).unwrap());
    }
}
