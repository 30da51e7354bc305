//! `nsgasp`: simulate, fit, impute, compare and benchmark.
//!
//! Every subcommand accepts `--config FILE`; keys in that TOML file override
//! the corresponding flags (see [`config`] for the key list). Failures print
//! one line `error: kind=<kind> message="<text>"` to stderr and exit with a
//! nonzero status.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nonsep_gasp::estimate::VarianceEstimate;

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "nsgasp",
    version,
    about = "Nonseparable GaSP imputation for multiple functional observations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset; writes truth.csv, masked.csv and simulation.toml.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit hyperparameters on the fully observed sites; writes model.toml.
    Fit {
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit, then predict every masked cell; writes predictions.tsv, model.toml
    /// and, given the truth, metrics.tsv.
    Impute {
        input: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run the model and every baseline on the same masked file; writes
    /// comparison.tsv and one prediction file per method.
    Baselines {
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Neighbouring sites on each side used by lm-by-site.
        #[arg(long)]
        flank: Option<usize>,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Time one likelihood evaluation on the fast and dense paths; writes benchmark.tsv.
    Benchmark {
        /// Comma-separated numbers of sites.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Largest size timed on the dense path.
        #[arg(long)]
        dense_max: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a prediction file against the truth; writes metrics.tsv.
    Evaluate {
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file whose keys override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short = 'o')]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'k')]
    k: Option<usize>,
    #[arg(long, short = 'n')]
    n: Option<usize>,
    /// Range parameters, one value or one per component.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigma2: Option<Vec<f64>>,
    /// Unit-spaced sites instead of random gaps.
    #[arg(long)]
    regular: bool,
    #[arg(long)]
    offset: Option<f64>,
    /// Number of partially observed samples.
    #[arg(long)]
    k_star: Option<usize>,
    #[arg(long)]
    holdout_fraction: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    PosteriorMode,
    Mle,
    PosteriorMean,
}

impl From<VarianceArg> for VarianceEstimate {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::PosteriorMode => VarianceEstimate::PosteriorMode,
            VarianceArg::Mle => VarianceEstimate::Mle,
            VarianceArg::PosteriorMean => VarianceEstimate::PosteriorMean,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Matérn roughness; only 2.5 can be fitted.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    prior_a: Option<f64>,
    #[arg(long)]
    prior_b: Option<f64>,
    #[arg(long)]
    prior_c: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long, value_enum)]
    variance: Option<VarianceArg>,
    /// Keep per-sample means instead of removing them.
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Interval level.
    #[arg(long)]
    level: Option<f64>,
    /// Threshold for the accuracy metric.
    #[arg(long)]
    threshold: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl SimArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.seed, self.seed);
        set(&mut c.k, self.k);
        set(&mut c.n, self.n);
        set(&mut c.gamma, self.gamma);
        set(&mut c.eta, self.eta);
        set(&mut c.sigma2, self.sigma2);
        if self.regular {
            c.irregular_sites = false;
        }
        set(&mut c.offset, self.offset);
        set(&mut c.k_star, self.k_star);
        set(&mut c.holdout_fraction, self.holdout_fraction);
    }
}

impl FitArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.nu, self.nu);
        c.prior.a = self.prior_a.or(c.prior.a);
        c.prior.b = self.prior_b.or(c.prior.b);
        c.prior.c = self.prior_c.or(c.prior.c);
        set(&mut c.optimizer.tolerance, self.tolerance);
        set(&mut c.optimizer.max_iterations, self.max_iterations);
        set(&mut c.optimizer.variance, self.variance.map(Into::into));
        if self.no_center {
            c.center = false;
        }
        c.threads = self.threads.or(c.threads);
    }
}

impl EvalArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.level, self.level);
        set(&mut c.threshold, self.threshold);
    }
}

fn finish(mut cfg: RunConfig, common: Common) -> Result<RunConfig, CliError> {
    set(&mut cfg.out_dir, common.out_dir);
    if let Some(path) = common.config {
        cfg = cfg.overlay_file(&path)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    match cli.command {
        Command::Simulate { sim, common } => {
            sim.apply(&mut cfg);
            commands::simulate_cmd(&finish(cfg, common)?)
        }
        Command::Fit { input, fit, common } => {
            fit.apply(&mut cfg);
            commands::fit_cmd(&finish(cfg, common)?, &input)
        }
        Command::Impute {
            input,
            truth,
            fit,
            eval,
            common,
        } => {
            fit.apply(&mut cfg);
            eval.apply(&mut cfg);
            commands::impute_cmd(&finish(cfg, common)?, &input, truth.as_deref())
        }
        Command::Baselines {
            input,
            truth,
            flank,
            fit,
            eval,
            common,
        } => {
            set(&mut cfg.flank, flank);
            fit.apply(&mut cfg);
            eval.apply(&mut cfg);
            commands::baselines_cmd(&finish(cfg, common)?, &input, &truth)
        }
        Command::Benchmark {
            sizes,
            dense_max,
            reps,
            seed,
            common,
        } => {
            set(&mut cfg.sizes, sizes);
            set(&mut cfg.dense_max, dense_max);
            set(&mut cfg.reps, reps);
            set(&mut cfg.seed, seed);
            commands::benchmark_cmd(&finish(cfg, common)?)
        }
        Command::Evaluate {
            predictions,
            truth,
            eval,
            common,
        } => {
            eval.apply(&mut cfg);
            commands::evaluate_cmd(&finish(cfg, common)?, &predictions, &truth)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_owned()).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
