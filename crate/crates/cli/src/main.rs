use std::path::PathBuf;
use std::process::ExitCode;

use bismut_cli::{list_suites, run, CliError, ExperimentConfig};
use clap::{Parser, Subcommand};

/// Monte Carlo checks of derivative formulas for heat semigroups on forms.
///
/// The thread count is taken from RAYON_NUM_THREADS; results do not depend on it.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suite named in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of sample paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Time step.
        #[arg(long)]
        step: Option<f64>,
    },
    /// List the suites and what each one checks.
    ListSuites,
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::ListSuites => {
            print!("{}", list_suites());
            Ok(0)
        }
        Command::Run { config, out, seed, paths, step } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.seed = seed.or(cfg.seed);
            cfg.n_paths = paths.or(cfg.n_paths);
            cfg.h = step.or(cfg.h);
            let result = run(&cfg)?;
            result.write(&out)?;
            print!("{}", result.summary());
            Ok(result.exit_code())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
