mod experiment;
mod filter;
mod plot;
mod provenance;
mod simulate;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;
use std::{fs, io};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use quadest::validation::{run_validation, ValidationOptions};
use quadest::{AugmentedStatistics, EstimatorKind, ExperimentConfig};

use crate::experiment::ExperimentArgs;
use crate::filter::FilterArgs;
use crate::provenance::Provenance;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Validation(String),
    Numerical(String),
}

impl Failure {
    pub fn io(ctx: impl Display) -> impl FnOnce(io::Error) -> Failure {
        let ctx = ctx.to_string();
        move |e| Failure::Config(format!("{ctx}: {e}"))
    }

    pub fn csv(e: csv::Error) -> Failure {
        Failure::Config(format!("csv: {e}"))
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Validation(m) => write!(f, "validation failed: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<quadest::Error> for Failure {
    fn from(e: quadest::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "quadest", version, about = "Linear and quadratic estimation under random measurement matrices and deception attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorChoice {
    Lin,
    Quad,
    Both,
}

impl EstimatorChoice {
    fn kinds(self) -> Vec<EstimatorKind> {
        match self {
            EstimatorChoice::Lin => vec![EstimatorKind::Linear],
            EstimatorChoice::Quad => vec![EstimatorKind::Quadratic],
            EstimatorChoice::Both => EstimatorKind::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the filter (and optionally a fixed-point smoother) over a measurement file.
    Filter {
        /// Model configuration file.
        #[arg(long)]
        model: PathBuf,
        /// CSV with columns k, y_1, ..., y_nz.
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, value_enum, default_value = "quad")]
        estimator: EstimatorChoice,
        /// Fixed smoothing point.
        #[arg(long, requires = "smooth_n")]
        smooth_at: Option<usize>,
        /// Largest smoothing lag.
        #[arg(long = "smooth-n", alias = "smooth-N", requires = "smooth_at")]
        smooth_n: Option<usize>,
        /// Per-step trace of the filter recursion.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Output file (stdout if absent).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run a bundled experiment (fig1..fig4) or one described by a config file.
    Experiment {
        name: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle and consistency checks.
    Validate {
        /// Fast subset without Monte Carlo.
        #[arg(long)]
        quick: bool,
        /// Write the per-check results as CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Relative perturbation of the Psi matrices (sensitivity test hook).
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb_psi: f64,
    },
    /// Sample one trajectory and write its measurements.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of steps (defaults to the config horizon).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, short)]
        output: PathBuf,
        /// Also write the signal, noise and attack indicators.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Dump the precomputed augmented statistics as CSV.
    Stats {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var("QUADEST_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Config(format!("QUADEST_THREADS must be a positive integer, got '{s}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(Failure::io(path.display()))?;
    Ok(ExperimentConfig::parse(&text)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = threads()?;
    match cli.command {
        Command::Filter { model, measurements, estimator, smooth_at, smooth_n, trace, output } => {
            let smooth = smooth_at.zip(smooth_n);
            filter::cmd_filter(&FilterArgs { model, measurements, estimators: estimator.kinds(), smooth, trace, output })
        }
        Command::Experiment { name, out_dir, runs, seed } => {
            let written = experiment::cmd_experiment(&ExperimentArgs { target: name, out_dir, runs, seed, threads })?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Validate { quick, report, runs, seed, perturb_psi } => {
            let opts = ValidationOptions { quick, psi_perturbation: perturb_psi, runs, seed, threads };
            let rep = run_validation(&opts)?;
            for c in &rep.checks {
                println!(
                    "{} {:<48} deviation {:.3e} tolerance {:.3e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.max_deviation,
                    c.tolerance
                );
            }
            if let Some(p) = report {
                let f = fs::File::create(&p).map_err(Failure::io(p.display()))?;
                rep.write_csv(f)?;
            }
            let failed: Vec<_> = rep.failures().map(|c| c.name.clone()).collect();
            if failed.is_empty() {
                info!("{} checks passed", rep.checks.len());
                Ok(())
            } else {
                Err(Failure::Validation(format!("{} of {} checks failed: {}", failed.len(), rep.checks.len(), failed.join(", "))))
            }
        }
        Command::Simulate { model, seed, horizon, output, truth } => {
            let config = load_config(&model)?;
            simulate::cmd_simulate(&config, seed, horizon.unwrap_or(config.horizon), &output, truth.as_deref())
        }
        Command::Stats { model, horizon, out_dir } => {
            let mut config = load_config(&model)?;
            if let Some(h) = horizon {
                config.horizon = h;
            }
            let stats = AugmentedStatistics::new(&config.build_model()?)?;
            fs::create_dir_all(&out_dir).map_err(Failure::io(out_dir.display()))?;
            let written = stats.write_csv_dump(&out_dir)?;
            let prov = Provenance::new(&config.canonical(), None);
            let p = out_dir.join("provenance.txt");
            fs::write(&p, prov.lines().join("\n") + "\n").map_err(Failure::io(p.display()))?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("quadest: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
