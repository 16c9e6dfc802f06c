//! File readers and small parsers shared by the commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rumcone::enumerate::{enumerate_a, read_a_file, Algorithm, Caps, RationalMatrix};
use rumcone::estimate::{EstimatorConfig, SeriesSpec};
use rumcone::geometry::{
    enumerate_patches, read_prices_csv_with_targets, BudgetSystem, PatchTable, DEFAULT_GEOMETRY_TOL,
};
use rumcone::{Error, Result};

use crate::{EstimatorArgs, Global};

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?))
}

/// Budgets and, when the file has a `w` column, the log expenditure each row was
/// normalized at.
pub fn prices(path: &Path) -> Result<(BudgetSystem, Option<Vec<f64>>)> {
    read_prices_csv_with_targets(open(path)?).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn patch_table(g: &Global, b: &BudgetSystem) -> Result<PatchTable> {
    enumerate_patches(b, !g.keep_intersections, DEFAULT_GEOMETRY_TOL, g.exec())
}

pub fn rational_matrix(g: &Global, t: &PatchTable, a_file: Option<&Path>, alg: Algorithm) -> Result<RationalMatrix> {
    match a_file {
        Some(p) => read_a_file(open(p)?, t.per_budget_counts(), g.axiom),
        None => enumerate_a(t, g.axiom, alg, &Caps::from_env()?, g.exec()),
    }
}

/// Numbers separated by commas, whitespace or newlines. A non-numeric first token
/// is taken as a header and skipped.
pub fn numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let tokens: Vec<&str> = text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
    let mut out = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ if i == 0 && tok.chars().next().is_some_and(char::is_alphabetic) => {}
            _ => return Err(Error::Validation(format!("{}: cannot parse {tok:?} as a number", path.display()))),
        }
    }
    Ok(out)
}

pub fn estimator_config(args: &EstimatorArgs, seed: u64, price_targets: Option<&[f64]>) -> Result<EstimatorConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
            EstimatorConfig::from_json(&text).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?
        }
        None => EstimatorConfig { series: SeriesSpec { seed, ..Default::default() }, ..Default::default() },
    };
    if let Some(e) = args.estimator {
        cfg.estimator = e;
    }
    if let Some(k) = args.basis_order {
        cfg.series.order = k;
        cfg.series.period_orders = None;
    }
    if cfg.series.targets.is_none() {
        cfg.series.targets = price_targets.map(<[f64]>::to_vec);
    }
    Ok(cfg)
}

pub fn parse_tau(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("bic") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Validation(format!("--tau must be `bic` or a nonnegative number, got {s:?}"))),
    }
}

pub fn check_level(alpha: f64, reps: usize, min_reps: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Validation(format!("--alpha must lie in (0, 0.5], got {alpha}")));
    }
    if reps < min_reps {
        return Err(Error::Validation(format!("--reps must be at least {min_reps}, got {reps}")));
    }
    if reps < 999 {
        eprintln!("warning: {reps} bootstrap replications; 999 or more are recommended");
    }
    Ok(())
}

/// Pretty JSON to a file or stdout.
pub fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}
