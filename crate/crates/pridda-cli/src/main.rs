use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pridda_cli::commands::{self, CalibrateArgs, RunFlags};

/// Differentially private distributed dual averaging over simulated gossip
/// networks: privacy calibration, experiment runs, reference solutions, and
/// parameter sweeps.
///
/// `PRIDDA_THREADS` caps run concurrency.
#[derive(Parser)]
#[command(name = "pridda", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the noise calibration for a privacy budget as key=value lines.
    Calibrate {
        /// Target epsilon, in (0, 1].
        #[arg(long)]
        epsilon: f64,
        /// Per-step Gaussian-mechanism delta, in (0, 1].
        #[arg(long)]
        delta0: f64,
        /// Node sampling ratio, in (0, 1].
        #[arg(long)]
        iota: f64,
        /// Lipschitz constant of the per-sample losses.
        #[arg(long, default_value_t = 1.0)]
        lipschitz: f64,
        /// Minimum samples per node.
        #[arg(long)]
        q: u64,
        /// Horizon T; defaults to the minimum feasible value.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Compute the centralized reference solution and write the reference file.
    Reference {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Solver iteration cap (default 200000).
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Execute the experiment per seed and write per-seed plus aggregate CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Single seed (overrides run.seeds).
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Comma-separated seed list (overrides run.seeds).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        trace_stride: Option<u64>,
    },
    /// Matched-seed comparison across the configured sweep axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        trace_stride: Option<u64>,
    },
}

fn seed_flags(seed: Option<u64>, seeds: Option<Vec<u64>>) -> Option<Vec<u64>> {
    seed.map(|s| vec![s]).or(seeds)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate { epsilon, delta0, iota, lipschitz, q, horizon } => {
            let args = CalibrateArgs {
                epsilon,
                delta0,
                iota,
                lipschitz,
                samples_per_node: q,
                horizon,
            };
            commands::cmd_calibrate(&args, &mut std::io::stdout())
        }
        Command::Reference { config, out, iterations } => {
            let flags = RunFlags { config, out, seeds: None, trace_stride: None };
            commands::cmd_reference(&flags, iterations)
        }
        Command::Run { config, out, seed, seeds, trace_stride } => {
            let flags = RunFlags { config, out, seeds: seed_flags(seed, seeds), trace_stride };
            commands::cmd_run(&flags)
        }
        Command::Sweep { config, out, seed, seeds, trace_stride } => {
            let flags = RunFlags { config, out, seeds: seed_flags(seed, seeds), trace_stride };
            commands::cmd_sweep(&flags)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
