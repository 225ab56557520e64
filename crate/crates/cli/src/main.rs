//! `numuon` command-line driver.

mod commands;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use numuon::Error;

#[derive(Parser)]
#[command(name = "numuon", version, about = "Train, diagnose and compress models with Muon and NuMuon")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training job from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral report for every matrix block of a checkpoint.
    Diagnose {
        #[arg(long)]
        ckpt: PathBuf,
        /// Also write the reports as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Ranks at which tail energy is reported.
        #[arg(long, value_delimiter = ',', default_value = "1,16")]
        ks: Vec<usize>,
        /// JSONL destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated-SVD compression of a checkpoint.
    Compress {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        rate: f64,
        /// `body`, `all`, or a comma-separated list of block names.
        #[arg(long, default_value = "body")]
        policy: String,
        /// Output checkpoint; the plan goes next to it as `.plan.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out loss of a checkpoint on a task.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// TOML file holding a run config or a bare task spec.
        #[arg(long)]
        task: PathBuf,
        /// Metrics destination; defaults to `<ckpt>.eval.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a grid of runs, train them and tabulate the results.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Concurrent runs; overrides `workers` in the sweep file.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Solve the capped-simplex LP and check it by vertex enumeration.
    Lp {
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Nuclear budget; unconstrained when absent.
        #[arg(long)]
        tau: Option<f64>,
    },
}

/// Process exit status for an error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Diverged { .. } => 3,
        Error::Io(_) | Error::FormatError(_) => 4,
        Error::ZeroInput
        | Error::RankDeficient
        | Error::InvalidRank { .. }
        | Error::ShapeError { .. }
        | Error::InvalidStep(_)
        | Error::MissingGradient(_)
        | Error::BlockTooSmall { .. } => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out } => commands::train(&config, out.as_deref()),
        Command::Diagnose { ckpt, csv, ks, out } => commands::diagnose(&ckpt, csv.as_deref(), &ks, out.as_deref()),
        Command::Compress {
            ckpt,
            rate,
            policy,
            out,
        } => commands::compress(&ckpt, rate, &policy, out.as_deref()),
        Command::Eval { ckpt, task, out } => commands::eval(&ckpt, &task, out.as_deref()),
        Command::Sweep { config, workers } => sweep::run(&config, workers),
        Command::Lp { sigma, rho, tau } => commands::lp(&sigma, rho, tau),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
