use super::*;
use crate::conetest::{bootstrap_test, default_tau, jn_statistic, BootstrapConfig, MultinomialResampler, Weighting};
use crate::estimate::{cf_pi, classify, freq_pi, series_pi, SeriesSpec, TIE_TOL};
use crate::geometry::three_cyclic_budgets;

fn exec() -> Execution {
    Execution::Parallel
}

#[test]
fn degenerate_mixture_repeats_one_type() {
    let (_, a) = crossing_model().unwrap();
    for h in 0..a.n_cols() {
        let mut nu = vec![0.0; a.n_cols()];
        nu[h] = 2.0;
        let data = sample_mixture(&MixtureDgp::new(&a, &nu, vec![50, 70], 1).unwrap(), exec()).unwrap();
        for (j, p) in data.periods.iter().enumerate() {
            assert_eq!(p.choices, Choices::Patches(vec![a.column(h)[j] as usize; [50, 70][j]]));
        }
    }
}

#[test]
fn mixture_frequencies_converge_to_implied_probabilities() {
    let (t, a) = crossing_model().unwrap();
    let n = 100_000;
    let dgp = MixtureDgp::new(&a, &[1.0, 1.0, 1.0], vec![n, n], 7).unwrap();
    let pi = dgp.implied_pi();
    let est = freq_pi(&sample_mixture(&dgp, exec()).unwrap(), &t).unwrap();
    for (got, want) in est.pi.values().iter().zip(&pi) {
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((got - want).abs() <= 4.0 * se, "{got} vs {want}");
    }
}

#[test]
fn sampling_is_deterministic_across_execution_modes() {
    let (_, a) = crossing_model().unwrap();
    let dgp = MixtureDgp::new(&a, &[0.2, 0.5, 0.3], vec![1000, 1000], 99).unwrap();
    let x = sample_mixture(&dgp, Execution::Sequential).unwrap();
    assert_eq!(x, sample_mixture(&dgp, Execution::Parallel).unwrap());
    let other = MixtureDgp::new(&a, &[0.2, 0.5, 0.3], vec![1000, 1000], 100).unwrap();
    assert_ne!(x, sample_mixture(&other, Execution::Sequential).unwrap());
}

#[test]
fn mixture_validation() {
    let (_, a) = crossing_model().unwrap();
    assert!(MixtureDgp::new(&a, &[1.0, 1.0], vec![1, 1], 0).is_err());
    assert!(MixtureDgp::new(&a, &[1.0, -1.0, 1.0], vec![1, 1], 0).is_err());
    assert!(MixtureDgp::new(&a, &[0.0; 3], vec![1, 1], 0).is_err());
    assert!(MixtureDgp::new(&a, &[1.0; 3], vec![1], 0).is_err());
}

#[test]
fn boundary_design_sits_on_the_cone_boundary() {
    let (_, a) = crossing_model().unwrap();
    let nu = crossing_weights(&a, [0.5, 0.5, 0.0]).unwrap();
    let dgp = MixtureDgp::new(&a, &nu, vec![1, 1], 0).unwrap();
    assert_eq!(dgp.implied_pi(), vec![0.5; 4]);

    // One binding inequality: the statistic is positive about half the time.
    let (t, a) = crossing_model().unwrap();
    let om = Weighting::identity(4);
    let runs = 400;
    let positive = (0..runs)
        .filter(|&s| {
            let data = boundary_dgp_example1(10_000, s, Execution::Sequential).unwrap();
            let est = freq_pi(&data, &t).unwrap();
            jn_statistic(&est.pi, &a, &om).unwrap() > 1e-9
        })
        .count();
    let share = positive as f64 / runs as f64;
    assert!((0.4..=0.6).contains(&share), "share {share}");
}

#[test]
fn interior_design_rarely_rejects() {
    let (t, a) = crossing_model().unwrap();
    let nu = crossing_weights(&a, [0.45, 0.45, 0.1]).unwrap();
    let om = Weighting::identity(4);
    let runs = 100;
    let n = 1000;
    let rejections = (0..runs)
        .filter(|&s| {
            let data = sample_mixture(&MixtureDgp::new(&a, &nu, vec![n, n], s).unwrap(), exec()).unwrap();
            let est = freq_pi(&data, &t).unwrap();
            let cfg = BootstrapConfig {
                tau: default_tau(n as f64).unwrap(),
                reps: 199,
                alpha: 0.05,
                seed: s,
                exec: Execution::Sequential,
            };
            let rs = MultinomialResampler::new(&est.pi).unwrap();
            bootstrap_test(&est.pi, &a, &om, &rs, &cfg).unwrap().reject
        })
        .count();
    assert!(rejections < 5, "{rejections} rejections");
}

#[test]
fn projection_residual_shrinks_with_sample_size() {
    let b = three_cyclic_budgets();
    let t = enumerate_patches(&b, true, DEFAULT_GEOMETRY_TOL, Execution::Sequential).unwrap();
    let a = crawl_a(&t, Axiom::Sarp, Execution::Sequential).unwrap();
    // Two types only, so the probabilities sit on a low-dimensional face and small
    // samples often land outside the cone.
    let nu: Vec<f64> = (0..a.n_cols()).map(|h| f64::from(u8::from(h < 2))).collect();
    let om = Weighting::identity(a.n_rows());
    let mean_residual = |n: usize| -> f64 {
        (0..20)
            .map(|s| {
                let data = sample_mixture(&MixtureDgp::new(&a, &nu, vec![n; 3], s).unwrap(), exec()).unwrap();
                let est = freq_pi(&data, &t).unwrap();
                jn_statistic(&est.pi, &a, &om).unwrap() / est.pi.total_n() as f64
            })
            .sum::<f64>()
            / 20.0
    };
    let (small, large) = (mean_residual(100), mean_residual(10_000));
    assert!(small > 0.0 && large < small / 10.0, "{small} {large}");
}

fn crossing_dgp(preferences: Preferences, endogenous: bool, n: usize, seed: u64) -> CobbDouglasDgp {
    CobbDouglasDgp {
        budgets: two_crossing_budgets(),
        targets: vec![0.5, 0.5],
        preferences,
        expenditure: ExpenditureLaw { lo: 0.0, hi: 1.0, endogenous },
        sample_sizes: vec![n, n],
        seed,
    }
}

#[test]
fn fixed_shares_give_proportional_bundles() {
    let dgp = crossing_dgp(Preferences::Fixed(vec![1.0, 3.0]), false, 200, 4);
    let data = cobb_douglas_population(&dgp, exec()).unwrap();
    for (j, p) in data.periods.iter().enumerate() {
        let Choices::Bundles(b) = &p.choices else { panic!() };
        let price = dgp.budgets.price(j);
        for (q, w) in b.iter().zip(&p.w) {
            // Spending shares are exactly (1/4, 3/4) and total spending is exp(w - target).
            let spend: Vec<f64> = q.iter().zip(price).map(|(x, p)| x * p).collect();
            let total = spend[0] + spend[1];
            assert!((spend[0] / total - 0.25).abs() < 1e-12);
            assert!((total - (w - 0.5).exp()).abs() < 1e-12);
        }
    }
    let t = enumerate_patches(&dgp.budgets, true, DEFAULT_GEOMETRY_TOL, Execution::Sequential).unwrap();
    let periods = classify(&data, &t, Some(&dgp.targets), TIE_TOL).unwrap();
    assert!(periods[0].patch.iter().all(|&i| i == 0));
}

#[test]
fn cobb_douglas_data_pass_the_test() {
    let b = three_cyclic_budgets();
    let t = enumerate_patches(&b, true, DEFAULT_GEOMETRY_TOL, Execution::Sequential).unwrap();
    let a = crawl_a(&t, Axiom::Sarp, Execution::Sequential).unwrap();
    let om = Weighting::identity(a.n_rows());
    let runs = 60;
    let n = 500;
    let rejections = (0..runs)
        .filter(|&s| {
            let dgp = CobbDouglasDgp {
                budgets: b.clone(),
                targets: vec![0.0; 3],
                preferences: Preferences::Dirichlet(vec![1.0, 1.0, 1.0]),
                expenditure: ExpenditureLaw { lo: -0.5, hi: 0.5, endogenous: false },
                sample_sizes: vec![n; 3],
                seed: s,
            };
            let data = cobb_douglas_population(&dgp, exec()).unwrap();
            let est = freq_pi(&data, &t).unwrap();
            let cfg = BootstrapConfig {
                tau: default_tau(n as f64).unwrap(),
                reps: 199,
                alpha: 0.05,
                seed: s,
                exec: Execution::Sequential,
            };
            let rs = MultinomialResampler::new(&est.pi).unwrap();
            bootstrap_test(&est.pi, &a, &om, &rs, &cfg).unwrap().reject
        })
        .count();
    assert!(rejections <= 6, "{rejections} of {runs} rejected");
}

/// `P(lambda * eps + (1 - lambda) * u <= c)` for independent uniforms, by quadrature
/// over `eps`.
fn linked_share_cdf(lambda: f64, c: f64) -> f64 {
    let steps = 200_000;
    (0..steps)
        .map(|i| {
            let e = (i as f64 + 0.5) / steps as f64;
            ((c - lambda * e) / (1.0 - lambda)).clamp(0.0, 1.0)
        })
        .sum::<f64>()
        / steps as f64
}

#[test]
fn control_function_removes_endogeneity_bias() {
    let lambda = 0.3;
    let n = 40_000;
    let dgp = crossing_dgp(Preferences::LinkedShare { lambda }, true, n, 8);
    let data = cobb_douglas_population(&dgp, exec()).unwrap();
    let t = enumerate_patches(&dgp.budgets, true, DEFAULT_GEOMETRY_TOL, Execution::Sequential).unwrap();
    // The below patch is a share of good 1 under 1/3 on budget 1 and over 2/3 on budget 2.
    let truth = [linked_share_cdf(lambda, 1.0 / 3.0), 1.0 - linked_share_cdf(lambda, 2.0 / 3.0)];
    let spec = SeriesSpec { targets: Some(dgp.targets.clone()), variance_reps: 40, ..Default::default() };
    let cf = cf_pi(&data, &t, &spec, exec()).unwrap();
    let series = series_pi(&data, &t, &spec, exec()).unwrap();
    for j in 0..2 {
        let se_cf = (cf.variances[j][(0, 0)] / n as f64).sqrt();
        let se_series = (series.variances[j][(0, 0)] / n as f64).sqrt();
        let got = cf.pi.block(j)[0];
        assert!((got - truth[j]).abs() <= 3.0 * se_cf, "budget {j}: cf {got} vs {} (se {se_cf})", truth[j]);
        let biased = series.pi.block(j)[0];
        assert!((biased - truth[j]).abs() >= 5.0 * se_series, "budget {j}: series {biased}");
    }
}

#[test]
fn endogenous_expenditure_inverts_its_conditional_cdf() {
    for &z in &[0.0, 0.3, 1.0] {
        for &e in &[0.0, 0.2, 0.7, 1.0] {
            let t = ExpenditureLaw::position(z, e);
            assert!(((1.0 - z) * t + z * t * t - e).abs() < 1e-12);
        }
    }
}

#[test]
fn cobb_douglas_validation() {
    let mut dgp = crossing_dgp(Preferences::LinkedShare { lambda: 1.5 }, false, 10, 0);
    assert!(cobb_douglas_population(&dgp, exec()).is_err());
    dgp.preferences = Preferences::Dirichlet(vec![1.0]);
    assert!(cobb_douglas_population(&dgp, exec()).is_err());
    dgp.preferences = Preferences::Fixed(vec![1.0, 1.0]);
    dgp.targets = vec![0.0];
    assert!(cobb_douglas_population(&dgp, exec()).is_err());
}
