//! One function per subcommand.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rumcone::conetest::{
    bootstrap_test, default_tau, effective_n_counts, nnls_project, BootstrapConfig, GaussianResampler,
    MultinomialResampler, PiVector, Resampler, Weighting,
};
use rumcone::counterfactual::{drop_block, Counterfactual, Quantity};
use rumcone::enumerate::{all_pairs, binary_menu_a, write_a_file, write_dense_csv, Algorithm, Caps, RationalMatrix};
use rumcone::enumerate::{brute_force_a, crawl_a, decompose_a};
use rumcone::estimate::{
    classify, estimate_classified, read_microdata_csv, write_microdata_csv, Estimate, Estimator, PairsResampler,
    TIE_TOL,
};
use rumcone::simulate::{
    boundary_dgp_example1, cobb_douglas_population, crossing_model, crossing_weights, sample_mixture, CobbDouglasDgp,
    ExpenditureLaw, MixtureDgp, Preferences,
};
use rumcone::{Error, Result, SCHEMA_VERSION};
use serde_json::json;

use crate::input::{self, check_level, emit_json, parse_tau};
use crate::{AlgorithmChoice, BinaryArgs, BoundsArgs, Global, ResamplerChoice, SimulateCommand, TestArgs};

fn algorithm(choice: AlgorithmChoice) -> Algorithm {
    match choice {
        AlgorithmChoice::Brute => Algorithm::Brute,
        AlgorithmChoice::Decompose => Algorithm::Decompose,
        AlgorithmChoice::Crawl | AlgorithmChoice::All => Algorithm::Crawl,
    }
}

pub fn patches(g: &Global, prices: &Path, out: Option<&Path>) -> Result<()> {
    let (b, _) = input::prices(prices)?;
    let t = input::patch_table(g, &b)?;
    println!("I={}", t.len());
    let counts: Vec<String> = t.per_budget_counts().iter().map(ToString::to_string).collect();
    println!("I_j={}", counts.join(","));
    if let Some(p) = out {
        let mut w = input::create(p)?;
        t.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn enumerate(
    g: &Global,
    prices: &Path,
    choice: AlgorithmChoice,
    verify: bool,
    out: Option<&Path>,
    dense: Option<&Path>,
) -> Result<()> {
    let (b, _) = input::prices(prices)?;
    let t = input::patch_table(g, &b)?;
    let caps = Caps::from_env()?;
    println!("I={}", t.len());
    let a = if choice == AlgorithmChoice::All || verify {
        let mut results: Vec<(&str, RationalMatrix)> = Vec::new();
        for (name, alg) in
            [("brute", Algorithm::Brute), ("crawl", Algorithm::Crawl), ("decompose", Algorithm::Decompose)]
        {
            let start = Instant::now();
            let res = match alg {
                Algorithm::Brute => brute_force_a(&t, g.axiom, &caps, g.exec()),
                Algorithm::Crawl => crawl_a(&t, g.axiom, g.exec()),
                Algorithm::Decompose => decompose_a(&t, g.axiom, g.exec()),
            };
            match res {
                Ok(a) => {
                    eprintln!("{name}: H={} in {:.3}s", a.n_cols(), start.elapsed().as_secs_f64());
                    results.push((name, a));
                }
                Err(e @ Error::CapExceeded { .. }) if !verify => eprintln!("{name}: skipped ({e})"),
                Err(e) => return Err(e),
            }
        }
        if verify {
            let reference = &results[0].1;
            for (name, a) in &results[1..] {
                if a.columns().ne(reference.columns()) {
                    return Err(Error::Internal(format!("{name} disagrees with {}", results[0].0)));
                }
            }
            eprintln!("verified: all algorithms produce the same {} columns", reference.n_cols());
        }
        let keep = results.iter().position(|r| r.0 == "crawl").unwrap_or(0);
        results.swap_remove(keep).1
    } else {
        rumcone::enumerate::enumerate_a(&t, g.axiom, algorithm(choice), &caps, g.exec())?
    };
    println!("H={}", a.n_cols());
    if let Some(p) = out {
        let mut w = input::create(p)?;
        write_a_file(&a, &mut w)?;
        w.flush()?;
    }
    if let Some(p) = dense {
        let mut w = input::create(p)?;
        write_dense_csv(&a, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn weighting(spec: &str, n: usize) -> Result<Weighting> {
    if spec.eq_ignore_ascii_case("identity") {
        return Ok(Weighting::identity(n));
    }
    let w = input::numbers(Path::new(spec))?;
    if w.len() != n {
        return Err(Error::Validation(format!("--omega has {} weights, expected {n}", w.len())));
    }
    Weighting::new(w)
}

fn effective_size(est: &Estimate, estimator: Estimator) -> Result<f64> {
    match estimator {
        Estimator::Freq => Ok(effective_n_counts(est.pi.sample_sizes())),
        _ => est.effective_n(),
    }
}

pub fn test(g: &Global, args: &TestArgs) -> Result<()> {
    check_level(args.alpha, args.reps, 99)?;
    let (b, price_targets) = input::prices(&args.prices)?;
    let t = input::patch_table(g, &b)?;
    let a = input::rational_matrix(g, &t, args.a_file.as_deref(), algorithm(args.algorithm))?;
    let cfg = input::estimator_config(&args.estimator, g.seed, price_targets.as_deref())?;
    let data = read_microdata_csv(input::open(&args.microdata)?, b.len())?;
    let periods = classify(&data, &t, cfg.series.targets.as_deref(), TIE_TOL)?;
    let est = estimate_classified(&periods, &cfg, g.exec())?;
    let n_eff = effective_size(&est, cfg.estimator)?;
    let tau = match parse_tau(&args.tau)? {
        Some(v) => v,
        None => default_tau(n_eff)?,
    };
    let om = weighting(&args.omega, a.n_rows())?;
    let resampler: Box<dyn Resampler> = match (args.resampler, cfg.estimator) {
        (ResamplerChoice::Multinomial, Estimator::Freq) | (ResamplerChoice::Auto, Estimator::Freq) => {
            Box::new(MultinomialResampler::new(&est.pi)?)
        }
        (ResamplerChoice::Multinomial, _) => {
            return Err(Error::Validation("multinomial resampling applies to frequency estimates only".into()))
        }
        (ResamplerChoice::Gaussian, _) | (ResamplerChoice::Auto, _) => {
            Box::new(GaussianResampler::new(&est.pi, &est.variances)?)
        }
        (ResamplerChoice::Pairs, _) => Box::new(PairsResampler::new(periods, &cfg)?),
    };
    let bcfg = BootstrapConfig { tau, reps: args.reps, alpha: args.alpha, seed: g.seed, exec: g.exec() };
    let result = bootstrap_test(&est.pi, &a, &om, resampler.as_ref(), &bcfg)?;
    if let Some(p) = &args.boot_stats {
        let mut w = input::create(p)?;
        for s in &result.boot_stats {
            writeln!(w, "{s}")?;
        }
        w.flush()?;
    }
    let mut report = serde_json::to_value(&result)?;
    let obj = report.as_object_mut().expect("struct serializes to an object");
    obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    obj.insert("estimator".into(), serde_json::to_value(cfg.estimator)?);
    obj.insert("pi_hat".into(), json!(est.pi.values()));
    obj.insert("sample_sizes".into(), json!(est.pi.sample_sizes()));
    obj.insert("effective_n".into(), json!(n_eff));
    obj.insert("I".into(), json!(a.n_rows()));
    obj.insert("H".into(), json!(a.n_cols()));
    obj.insert("axiom".into(), serde_json::to_value(g.axiom)?);
    emit_json(&report, args.out.as_deref())
}

fn parse_query(s: &str) -> Result<Quantity> {
    let bad = || Error::Validation(format!("bad query {s:?}; expected patch:I, demand:K or cdf:K:Z"));
    let parts: Vec<&str> = s.split(':').collect();
    let index =
        |p: &str| -> Result<usize> { p.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1).ok_or_else(bad) };
    match parts[..] {
        ["patch", i] => Ok(Quantity::PatchProb(index(i)?)),
        ["demand", k] => Ok(Quantity::ExpectedDemand(index(k)?)),
        ["cdf", k, z] => Ok(Quantity::Cdf { good: index(k)?, z: z.parse().map_err(|_| bad())? }),
        _ => Err(bad()),
    }
}

pub fn bounds(g: &Global, args: &BoundsArgs) -> Result<()> {
    let (b, price_targets) = input::prices(&args.prices)?;
    if args.target == 0 || args.target > b.len() {
        return Err(Error::Validation(format!("--target must lie in 1..={}", b.len())));
    }
    let target = args.target - 1;
    let queries: Vec<(String, Quantity)> =
        args.queries.iter().map(|q| Ok((q.clone(), parse_query(q)?))).collect::<Result<_>>()?;
    let t = input::patch_table(g, &b)?;
    let a = input::rational_matrix(g, &t, args.a_file.as_deref(), Algorithm::Crawl)?;
    let pi_obs = match (&args.pi, &args.microdata) {
        (Some(p), _) => {
            let pi = input::numbers(p)?;
            if pi.len() == a.n_rows() {
                drop_block(&pi, a.block_sizes(), target)?
            } else {
                pi
            }
        }
        (None, Some(m)) => {
            let cfg = input::estimator_config(&args.estimator, g.seed, price_targets.as_deref())?;
            let data = read_microdata_csv(input::open(m)?, b.len())?;
            let mut periods = classify(&data, &t, cfg.series.targets.as_deref(), TIE_TOL)?;
            periods.remove(target);
            let mut cfg = cfg;
            if let Some(tg) = cfg.series.targets.as_mut() {
                tg.remove(target);
            }
            if let Some(o) = cfg.series.period_orders.as_mut() {
                if o.len() == b.len() {
                    o.remove(target);
                }
            }
            estimate_classified(&periods, &cfg, g.exec())?.pi.values().to_vec()
        }
        (None, None) => return Err(Error::Validation("give either --pi or --microdata".into())),
    };
    let cf = Counterfactual::new(&a, &t, target, &pi_obs, args.project)?;
    let mut reports = Vec::with_capacity(queries.len());
    for (label, q) in &queries {
        let mut bd = cf.bound(q)?;
        if args.oracle {
            let v = cf.vertex_bounds(q)?;
            if (v.lower - bd.lower).abs() > 1e-7 || (v.upper - bd.upper).abs() > 1e-7 {
                return Err(Error::Internal(format!(
                    "{label}: LP bounds [{}, {}] disagree with vertex enumeration [{}, {}]",
                    bd.lower, bd.upper, v.lower, v.upper
                )));
            }
            bd.vertices = v.vertices;
        }
        let mut value = serde_json::to_value(&bd)?;
        value.as_object_mut().expect("object").insert("label".into(), json!(label));
        reports.push(value);
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "target": args.target,
        "projected": cf.projection_distance().is_some(),
        "projection_distance": cf.projection_distance(),
        "observed_pi": cf.observed(),
        "bounds": reports,
    });
    emit_json(&report, args.out.as_deref())
}

fn parse_menus(s: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|m| !m.trim().is_empty())
        .map(|m| {
            let bad = || Error::Validation(format!("bad menu {m:?}; expected a pair like 1-2"));
            let (x, y) = m.trim().split_once('-').ok_or_else(bad)?;
            let x: usize = x.parse().map_err(|_| bad())?;
            let y: usize = y.parse().map_err(|_| bad())?;
            if x == 0 || y == 0 || x > n || y > n {
                return Err(Error::Validation(format!("menu {m:?} names an item outside 1..={n}")));
            }
            Ok((x - 1, y - 1))
        })
        .collect()
}

pub fn binary(g: &Global, args: &BinaryArgs) -> Result<()> {
    let menus = match &args.menus {
        Some(s) => parse_menus(s, args.items)?,
        None => all_pairs(args.items),
    };
    let a = binary_menu_a(args.items, &menus, &Caps::from_env()?)?;
    if let Some(p) = &args.out {
        let mut w = input::create(p)?;
        write_a_file(&a, &mut w)?;
        w.flush()?;
    }
    let Some(pi_path) = &args.pi else {
        println!("I={} H={}", a.n_rows(), a.n_cols());
        for row in a.to_rows() {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            println!("{}", cells.join(" "));
        }
        return Ok(());
    };
    let values = input::numbers(pi_path)?;
    let n = args.sample_size.unwrap_or(1);
    let pi = PiVector::new(values, a.block_sizes().to_vec(), vec![n; a.n_budgets()])?;
    let om = Weighting::identity(a.n_rows());
    let proj = nnls_project(&pi, &a, &om, 0.0)?;
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "I": a.n_rows(),
        "H": a.n_cols(),
        "rationalizable": rumcone::conetest::cone_membership(pi.values(), &a)?,
        "distance": proj.objective,
    });
    if let Some(n) = args.sample_size {
        check_level(args.alpha, args.reps, 1)?;
        let tau = match parse_tau(&args.tau)? {
            Some(v) => v,
            None => default_tau(n as f64)?,
        };
        let bcfg = BootstrapConfig { tau, reps: args.reps, alpha: args.alpha, seed: g.seed, exec: g.exec() };
        let result = bootstrap_test(&pi, &a, &om, &MultinomialResampler::new(&pi)?, &bcfg)?;
        report["test"] = serde_json::to_value(&result)?;
    }
    emit_json(&report, None)
}

pub fn simulate(g: &Global, dgp: &SimulateCommand, out: Option<&Path>) -> Result<()> {
    let data = match dgp {
        SimulateCommand::Mixture { prices, nu, n } => {
            let (b, _) = input::prices(prices)?;
            let t = input::patch_table(g, &b)?;
            let a = input::rational_matrix(g, &t, None, Algorithm::Crawl)?;
            let nu = nu.clone().unwrap_or_else(|| vec![1.0; a.n_cols()]);
            sample_mixture(&MixtureDgp::new(&a, &nu, vec![*n; b.len()], g.seed)?, g.exec())?
        }
        SimulateCommand::Boundary { n, interior } => {
            if *interior == 0.0 {
                boundary_dgp_example1(*n, g.seed, g.exec())?
            } else {
                if !(0.0..1.0).contains(interior) {
                    return Err(Error::Validation("--interior must lie in [0, 1)".into()));
                }
                let (_, a) = crossing_model()?;
                let side = (1.0 - interior) / 2.0;
                let nu = crossing_weights(&a, [side, side, *interior])?;
                sample_mixture(&MixtureDgp::new(&a, &nu, vec![*n, *n], g.seed)?, g.exec())?
            }
        }
        SimulateCommand::CobbDouglas { prices, fixed, dirichlet, linked_share, w_lo, w_hi, endogenous, n } => {
            let (b, targets) = input::prices(prices)?;
            let preferences = match (fixed, dirichlet, linked_share) {
                (Some(f), _, _) => Preferences::Fixed(f.clone()),
                (_, Some(d), _) => Preferences::Dirichlet(d.clone()),
                (_, _, Some(l)) => Preferences::LinkedShare { lambda: *l },
                _ => Preferences::Dirichlet(vec![1.0; b.goods()]),
            };
            let dgp = CobbDouglasDgp {
                targets: targets.unwrap_or_else(|| vec![0.0; b.len()]),
                budgets: b.clone(),
                preferences,
                expenditure: ExpenditureLaw { lo: *w_lo, hi: *w_hi, endogenous: *endogenous },
                sample_sizes: vec![*n; b.len()],
                seed: g.seed,
            };
            cobb_douglas_population(&dgp, g.exec())?
        }
    };
    match out {
        Some(p) => {
            let mut w = input::create(p)?;
            write_microdata_csv(&data, &mut w)?;
            w.flush()?;
        }
        None => write_microdata_csv(&data, std::io::stdout().lock())?,
    }
    Ok(())
}
