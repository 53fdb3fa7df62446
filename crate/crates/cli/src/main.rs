use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wdmoe_cli::{cmd_run, cmd_sweep, cmd_validate, CliError};

/// Latency studies for mixture-of-experts inference over wireless devices.
#[derive(Debug, Parser)]
#[command(name = "wdmoe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its summary.
    Run {
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long, env = "WDMOE_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "WDMOE_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Also write per-step traces to traces.jsonl.
        #[arg(long)]
        trace: bool,
    },
    /// Sweep the drop threshold with shared random numbers.
    Sweep {
        config: PathBuf,
        /// Comma-separated thresholds, e.g. 0,0.1,0.2,0.3
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        thetas: Vec<f64>,
        #[arg(long, env = "WDMOE_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "WDMOE_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Validate a config and print the effective configuration.
    Validate { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, seed, out, trace } => {
            for path in cmd_run(&config, seed, &out, trace)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Sweep { config, thetas, seed, out } => {
            for path in cmd_sweep(&config, &thetas, seed, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Validate { config } => print!("{}", cmd_validate(&config)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
