mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Environment variable read for the thread count when --threads is absent.
const THREADS_ENV: &str = "FSAGP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fsagp", version, about = "Full-scale approximation Gaussian processes with iterative solvers")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration value, e.g. --set fit.backend=cholesky.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads (default: FSAGP_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a zero-mean GP dataset on the unit cube.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Also write empirical and model semivariograms.
        #[arg(long)]
        variogram: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Maximum-likelihood fit of the FSA model.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// cholesky or iterative.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predictive means and variances with RMSE, log-score and CRPS.
    Predict {
        /// Result file written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// exact, sim or lanczos.
        #[arg(long)]
        var_method: Option<String>,
        /// cholesky or iterative.
        #[arg(long)]
        mean_backend: Option<String>,
    },
    /// CG iteration counts per preconditioner over a grid.
    BenchPrecond {
        #[arg(long)]
        out: PathBuf,
        /// Write the markdown table here instead of stdout.
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Cholesky NLL over a grid of inducing-point counts and taper ranges.
    SweepFsa {
        /// Use this dataset instead of a simulation.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vecchia likelihoods, preconditioners and solve paths.
    VecchiaBench {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flag values become overrides applied after `--set`.
fn flag_overrides(cmd: &Command) -> Vec<String> {
    let mut ov = Vec::new();
    let text = |key: &str, v: &Option<String>| v.as_ref().map(|v| format!("{key}={}", toml::Value::from(v.as_str())));
    let num = |key: &str, v: Option<u64>| v.map(|v| format!("{key}={v}"));
    match cmd {
        Command::Simulate { seed, n, .. } => {
            ov.extend(num("simulate.seed", *seed));
            ov.extend(num("simulate.n", n.map(|n| n as u64)));
        }
        Command::Fit { backend, seed, .. } => {
            ov.extend(text("fit.backend", backend));
            ov.extend(num("fit.seed", *seed));
        }
        Command::Predict {
            var_method,
            mean_backend,
            ..
        } => {
            ov.extend(text("predict.var_method", var_method));
            ov.extend(text("predict.mean_backend", mean_backend));
        }
        _ => {}
    }
    ov
}

fn init_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(s) => Some(
                s.trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("{THREADS_ENV} must be a positive integer, got '{s}'")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::config("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    let mut overrides = cli.overrides.clone();
    overrides.extend(flag_overrides(&cli.command));
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Simulate { out, variogram, .. } => {
            println!("{}", commands::simulate::run(&cfg, out, variogram.as_deref())?);
        }
        Command::Fit { data, out, .. } => {
            let r = commands::fit::run(&cfg, data, out)?;
            println!(
                "{} fit: sigma2 = {}, sigma1_2 = {}, rho = {}, nll = {}, converged = {} ({} evaluations, {:.2} s); wrote {}",
                r.backend,
                data::fmt17(r.params.sigma2),
                data::fmt17(r.params.sigma1_2),
                data::fmt17(r.params.rho),
                data::fmt17(r.nll),
                r.converged,
                r.evaluations,
                r.wall_time_secs,
                out.display()
            );
        }
        Command::Predict {
            fit,
            train,
            test,
            out,
            scores,
            ..
        } => {
            let p = commands::predict::run(&cfg, fit, train, test, out, scores.as_deref())?;
            match p.scores {
                Some(s) => println!(
                    "n_p = {}, mean variance {:.6}: rmse = {}, log_score = {}, crps = {}",
                    p.mean.len(),
                    p.var.iter().sum::<f64>() / p.var.len() as f64,
                    data::fmt17(s.rmse),
                    data::fmt17(s.log_score),
                    data::fmt17(s.crps)
                ),
                None => println!("n_p = {}: no test response, scores skipped", p.mean.len()),
            }
        }
        Command::BenchPrecond { out, markdown } => {
            let (_, md) = commands::bench::run(&cfg, out)?;
            match markdown {
                Some(path) => commands::write_text(path, &md)?,
                None => print!("{md}"),
            }
        }
        Command::SweepFsa { data, out } => {
            let s = commands::sweep::run(&cfg, data.as_deref(), out)?;
            println!("{}", s.report());
        }
        Command::VecchiaBench { out } => {
            let rows = commands::vecchia::run(&cfg, out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
