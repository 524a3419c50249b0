use std::path::PathBuf;
use std::process::ExitCode;

use blk_survival_cli::commands::{
    cmd_compare, cmd_elicit, cmd_fit, cmd_partition, cmd_simulate, CompareArgs, FitArgs, SimulateArgs,
};
use blk_survival_cli::error::CliResult;
use blk_survival_cli::io::warn;
use clap::{Parser, Subcommand};

/// Bayes linear kinematic fitting of dynamic piecewise-hazard survival models.
#[derive(Parser)]
#[command(name = "blksurv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and write posterior.csv, eta.csv and plotdata.csv.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// log-moment, log-mode or lognormal; overrides the configuration.
        #[arg(long)]
        method: Option<String>,
        /// Pool in the joint space of all linear predictors instead of the
        /// coefficient space (slow; for cross-checking).
        #[arg(long)]
        naive: bool,
    },
    /// Simulate a cohort from true coefficients, one row per interval.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        n: usize,
        /// Target fraction of censored individuals in [0, 1).
        #[arg(long, default_value_t = 0.0)]
        censoring: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert hazard-ratio judgements into prior means and variances.
    Elicit {
        #[arg(long)]
        judgements: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the logarithmic time partition.
    Partition {
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the fit with the reference sampler and write compare.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> CliResult<Vec<String>> {
    match cli.command {
        Command::Fit { config, data, out, method, naive } => cmd_fit(&FitArgs {
            config: &config,
            data: &data,
            out: &out,
            method: method.as_deref(),
            naive,
        }),
        Command::Simulate { config, truth, n, censoring, seed, out } => cmd_simulate(&SimulateArgs {
            config: &config,
            truth: &truth,
            n,
            censoring,
            seed,
            out: out.as_deref(),
        }),
        Command::Elicit { judgements, out } => cmd_elicit(&judgements, out.as_deref()),
        Command::Partition { nu, kappa, r, out } => cmd_partition(nu, kappa, r, out.as_deref()),
        Command::Compare { config, data, out, method, seed } => cmd_compare(&CompareArgs {
            config: &config,
            data: &data,
            out: &out,
            method: method.as_deref(),
            seed,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(warnings) => {
            warnings.iter().for_each(|w| warn(w));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
