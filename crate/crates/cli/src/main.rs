use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mor_core::MorError;

mod commands;
mod config;
mod report;

#[derive(Debug, Parser)]
#[command(name = "mor", version, about = "Interpolatory and H2-optimal model reduction for the 2D heat equation")]
struct Cli {
    /// Worker threads for sample collection and quadrature.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that builds the full model.
#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override `n_modes` from the config.
    #[arg(long)]
    n_modes: Option<usize>,
    /// Override `quad_order` from the config.
    #[arg(long)]
    quad_order: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect a tangential dataset from the config's `sample` block.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a reduced model from a dataset.
    Reduce {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `loewner` (data only) or `projection` (explicit modal bases).
        #[arg(long, default_value = "loewner")]
        method: String,
    },
    /// Check the interpolation conditions of a reduced model; exit 1 on failure.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        rom: PathBuf,
        /// Dataset holding the interpolation data; defaults to the `sample` block.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// H2 norms, H2 error and optimality residuals.
    H2 {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        rom: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-frequency Hilbert-Schmidt norms.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fixed-point iteration toward the H2 optimality conditions.
    Irka {
        #[command(flatten)]
        model: ModelArgs,
        /// Reduced order r.
        #[arg(long)]
        order: Option<usize>,
        /// Initial points: `logspace:lo,hi` or a comma-separated list.
        #[arg(long)]
        init: Option<String>,
        /// Convergence threshold on the matched point movement.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Random initial directions from this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Reduced model output.
        #[arg(long)]
        out: PathBuf,
        /// Convergence report output; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare full and reduced responses in the time domain.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        rom: PathBuf,
        /// Input signal CSV on the control grid; defaults to the `simulate` block.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output of the full model.
        #[arg(long)]
        full_csv: Option<PathBuf>,
        /// Output of the reduced model.
        #[arg(long)]
        rom_csv: Option<PathBuf>,
    },
}

/// 2 for bad input or configuration, 1 for numerical failures.
fn exit_code(e: &MorError) -> u8 {
    match e {
        MorError::Iteration { source, .. } => exit_code(source),
        MorError::Io(_)
        | MorError::Parse(_)
        | MorError::Csv(_)
        | MorError::Validation(_)
        | MorError::Dimension(_)
        | MorError::Domain(_)
        | MorError::Data(_)
        | MorError::PoleProximity { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(2);
    }
    match commands::dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
