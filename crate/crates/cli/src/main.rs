use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "trimwave",
    version,
    about = "Run spectral experiments on trimmed random lattice operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a config, run its experiment and write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; results do not depend on this.
        #[arg(long, env = "TRIMWAVE_THREADS")]
        threads: Option<usize>,
        /// Output directory, overriding the config's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Only validate the config.
        #[arg(long)]
        validate: bool,
    },
    /// Check schema and preconditions without computing anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Run {
            config,
            validate: true,
            ..
        }
        | Command::Validate { config } => trimwave_cli::validate_command(&config),
        Command::Run {
            config,
            threads,
            output,
            ..
        } => trimwave_cli::run_command(&config, output, threads),
    };
    ExitCode::from(code as u8)
}
