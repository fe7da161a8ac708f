//! Experiment harness: desk-scale reproductions of the perturbation sweeps,
//! pruning protocol and meta-GAM comparison, emitting plot-ready CSV/JSON.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

mod commands;
mod sweep;

use clap::{Parser, Subcommand};
use sievegen::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "sievegen", version, about = "Sieve-MLE deep generative estimation with instance-noise perturbation and entropic-OT evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/val/test CSV files plus a JSON sidecar.
    GenData {
        /// case1|case2|case3|swiss_roll|sphere|model1|model2
        #[arg(long)]
        case: String,
        #[arg(long)]
        n_train: usize,
        #[arg(long, default_value_t = 1000)]
        n_val: usize,
        #[arg(long, default_value_t = 1000)]
        n_test: usize,
        /// Ambient noise scale sigma_* (0 keeps samples on the support).
        #[arg(long, default_value_t = 0.0)]
        sigma_star: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },

    /// Train a generator on a gen-data directory; writes checkpoint.json,
    /// history.csv and train_summary.json.
    Train {
        /// Directory holding train.csv and val.csv.
        #[arg(long)]
        data: PathBuf,
        /// Training configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Estimated W1 between checkpoint samples and test data.
    EvalW1 {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding test.csv.
        #[arg(long)]
        data: PathBuf,
        /// Sample count per side of the transport problem.
        #[arg(long, default_value_t = 1000)]
        m: usize,
        /// standard_normal|uniform_unit_cube
        #[arg(long, default_value = "standard_normal")]
        prior: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed entropic regularization (default: annealed from the cost scale).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Iteration budget per annealing stage.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Optional JSON output file (the result always prints to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Train one model per (seed, sigma_tilde) grid point and record the
    /// estimated W1 against held-out test data. Resumable.
    SweepSigma {
        /// Experiment configuration JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Train one model per (seed, n, sigma_tilde) and record recovery
    /// metrics over the sample-size grid. Resumable.
    SweepN {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Dense training plus two magnitude-pruning rounds (25%, then 50% of
    /// generator parameters) with masked retraining.
    PruneTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Fit an additive decomposition of a checkpoint generator and compare
    /// both generators' estimated W1 on test data.
    MetaGam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 32)]
        knots: usize,
        /// Latent draws for the least-squares fit.
        #[arg(long, default_value_t = 10_000)]
        n_draws: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value = "standard_normal")]
        prior: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },

    /// Aggregate a sweep CSV by (n, sigma_tilde): median and mean per key.
    Report {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn run(cli: Cli) -> sievegen::Result<()> {
    match cli.command {
        Command::GenData {
            case,
            n_train,
            n_val,
            n_test,
            sigma_star,
            seed,
            out,
        } => commands::gen_data(&case, n_train, n_val, n_test, sigma_star, seed, &out),
        Command::Train {
            data,
            config,
            seed,
            out,
        } => commands::train(&data, &config, seed, &out),
        Command::EvalW1 {
            checkpoint,
            data,
            m,
            prior,
            seed,
            epsilon,
            max_iter,
            out,
        } => commands::eval_w1(&checkpoint, &data, m, &prior, seed, epsilon, max_iter, out.as_deref()),
        Command::SweepSigma { config, out } => sweep::run_sweep(&config, &out, sweep::SweepKind::Sigma),
        Command::SweepN { config, out } => sweep::run_sweep(&config, &out, sweep::SweepKind::SampleSize),
        Command::PruneTrain {
            data,
            config,
            seed,
            out,
        } => commands::prune_train(&data, &config, seed, &out),
        Command::MetaGam {
            checkpoint,
            data,
            knots,
            n_draws,
            m,
            prior,
            seed,
            out,
        } => commands::meta_gam(&checkpoint, &data, knots, n_draws, m, &prior, seed, &out),
        Command::Report { sweep, out } => commands::report(&sweep, &out),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TrainingDiverged { .. }
        | Error::NonFinite { .. }
        | Error::Convergence { .. }
        | Error::RankDeficient { .. } => 3,
        _ => 2,
    }
}
