mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Experiment;

/// Square-function experiments on periodic grids.
#[derive(Parser)]
#[command(name = "aniso-lp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invariant checks for every module.
    Verify(Args),
    /// Equivalence studies over the configured sweep.
    Sweep(Args),
    /// Derivative characterization, Poisson and Marcinkiewicz showcases.
    Demo(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "ANISO_LP_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, args): (fn(&Experiment) -> commands::Outcome, Args) = match cli.command {
        Command::Verify(a) => (commands::verify, a),
        Command::Sweep(a) => (commands::sweep, a),
        Command::Demo(a) => (commands::demo, a),
    };
    let mut experiment = match Experiment::load(&args.config) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = args.output {
        experiment.config.output_dir = dir;
    }
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&experiment) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed; see {}", experiment.config.output_dir.display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
