//! Command-line front end: patches, enumeration, the cone test, counterfactual
//! bounds, binary menus and synthetic data.

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rumcone::estimate::Estimator;
use rumcone::revpref::Axiom;
use rumcone::{Error, Execution};

#[derive(Parser, Debug)]
#[command(name = "rumcone", version, about = "Test random utility models on repeated cross-sections of demand")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Revealed-preference axiom used to decide rationalizability.
    #[arg(long, global = true, default_value = "sarp")]
    pub axiom: Axiom,
    /// Keep patches lying on the intersection of two budgets.
    #[arg(long, global = true)]
    pub keep_intersections: bool,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, env = "RUMCONE_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cut the budgets into patches.
    Patches {
        prices: PathBuf,
        /// Write the patch table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List all rationalizable choice types.
    Enumerate {
        prices: PathBuf,
        #[arg(long, value_enum, default_value_t = AlgorithmChoice::Crawl)]
        algorithm: AlgorithmChoice,
        /// Run every algorithm and fail unless they agree.
        #[arg(long)]
        verify: bool,
        /// Write the compact A file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write A as a dense 0/1 CSV.
        #[arg(long)]
        dense: Option<PathBuf>,
    },
    /// Estimate patch probabilities and run the bootstrap cone test.
    Test(TestArgs),
    /// Bound demand on a budget with no observations.
    Bounds(BoundsArgs),
    /// Rational choice types for binary menus, optionally testing given choice rates.
    Binary(BinaryArgs),
    /// Write synthetic microdata.
    Simulate {
        #[command(subcommand)]
        dgp: SimulateCommand,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmChoice {
    Brute,
    Crawl,
    Decompose,
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResamplerChoice {
    /// Multinomial for frequencies, Gaussian for smoothed estimates.
    Auto,
    Multinomial,
    Gaussian,
    /// Resample observations and re-run the estimator.
    Pairs,
}

#[derive(Args, Debug, Clone)]
pub struct EstimatorArgs {
    #[arg(long)]
    pub estimator: Option<Estimator>,
    /// JSON estimator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of basis functions in log expenditure.
    #[arg(long)]
    pub basis_order: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    pub prices: PathBuf,
    pub microdata: PathBuf,
    /// Read A instead of enumerating it.
    #[arg(long)]
    pub a_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AlgorithmChoice::Crawl)]
    pub algorithm: AlgorithmChoice,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// `bic` for sqrt(ln n / n) at the effective sample size, or a number.
    #[arg(long, default_value = "bic")]
    pub tau: String,
    /// `identity` or a file with one positive weight per patch.
    #[arg(long, default_value = "identity")]
    pub omega: String,
    #[arg(long, default_value_t = 999)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = ResamplerChoice::Auto)]
    pub resampler: ResamplerChoice,
    /// Dump the bootstrap statistics, one per line.
    #[arg(long)]
    pub boot_stats: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    pub prices: PathBuf,
    /// Unobserved budget, 1-based.
    #[arg(long)]
    pub target: usize,
    /// Patch probabilities, either for all budgets or for all but the target.
    #[arg(long, conflicts_with = "microdata")]
    pub pi: Option<PathBuf>,
    /// Microdata for the observed budgets.
    #[arg(long)]
    pub microdata: Option<PathBuf>,
    /// `patch:I`, `demand:K` or `cdf:K:Z` with 1-based patch and good indices.
    #[arg(long = "query", required = true)]
    pub queries: Vec<String>,
    /// Project inconsistent probabilities onto the cone instead of failing.
    #[arg(long)]
    pub project: bool,
    /// Also enumerate the vertices of the feasible set.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub a_file: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BinaryArgs {
    #[arg(long)]
    pub items: usize,
    /// Comma-separated 1-based pairs such as `1-2,2-3`; all pairs by default.
    #[arg(long)]
    pub menus: Option<String>,
    /// Choice rates, two per menu.
    #[arg(long)]
    pub pi: Option<PathBuf>,
    /// Observations per menu; runs the bootstrap test on `--pi`.
    #[arg(long, requires = "pi")]
    pub sample_size: Option<usize>,
    #[arg(long, default_value = "bic")]
    pub tau: String,
    #[arg(long, default_value_t = 999)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write the compact A file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum SimulateCommand {
    /// Mixture of rational types on the budgets of a prices file.
    Mixture {
        prices: PathBuf,
        /// Type weights, one per column of A; uniform by default.
        #[arg(long, value_delimiter = ',')]
        nu: Option<Vec<f64>>,
        #[arg(long)]
        n: usize,
    },
    /// Two crossing budget lines; by default the population sits on the cone boundary.
    Boundary {
        #[arg(long)]
        n: usize,
        /// Weight of the type choosing above the other line on both budgets.
        #[arg(long, default_value_t = 0.0)]
        interior: f64,
    },
    /// Cobb-Douglas consumers.
    CobbDouglas {
        prices: PathBuf,
        #[arg(long, value_delimiter = ',', group = "prefs")]
        fixed: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', group = "prefs")]
        dirichlet: Option<Vec<f64>>,
        /// Two goods, first share `lambda * eps + (1 - lambda) * u`.
        #[arg(long, group = "prefs")]
        linked_share: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        w_lo: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        w_hi: f64,
        /// Let the shock that moves log expenditure also move preferences.
        #[arg(long)]
        endogenous: bool,
        #[arg(long)]
        n: usize,
    },
}

impl Global {
    pub fn exec(&self) -> Execution {
        match self.threads {
            Some(1) => Execution::Sequential,
            _ => Execution::Parallel,
        }
    }

    fn configure_threads(&self) -> rumcone::Result<()> {
        match self.threads {
            Some(0) => Err(Error::Validation("--threads must be at least 1".into())),
            #[cfg(feature = "parallel")]
            Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Internal(e.to_string())),
            _ => Ok(()),
        }
    }
}

fn run(cli: Cli) -> rumcone::Result<()> {
    cli.global.configure_threads()?;
    let g = &cli.global;
    match cli.command {
        Command::Patches { prices, out } => commands::patches(g, &prices, out.as_deref()),
        Command::Enumerate { prices, algorithm, verify, out, dense } => {
            commands::enumerate(g, &prices, algorithm, verify, out.as_deref(), dense.as_deref())
        }
        Command::Test(args) => commands::test(g, &args),
        Command::Bounds(args) => commands::bounds(g, &args),
        Command::Binary(args) => commands::binary(g, &args),
        Command::Simulate { dgp, out } => commands::simulate(g, &dgp, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
