use clap::{Parser, Subcommand};
use fedrobust_cli::{account, kappa, run, sweep, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Federated learning experiment runner: differentially private momentum
/// updates, sketch compression, and Byzantine-robust aggregation.
#[derive(Parser)]
#[command(name = "fedrobust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment from a config file.
    Run { config: PathBuf },
    /// Run a grid of experiments and summarize across seeds.
    Sweep { grid: PathBuf },
    /// Print the privacy report for a config without training.
    Account { config: PathBuf },
    /// Run the robustness-coefficient certification suite for a config.
    Kappa { config: PathBuf },
}

/// Exit codes: 0 success, 1 runtime failure, 2 invalid config.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => run::run(&config),
        Command::Sweep { grid } => sweep::sweep(&grid),
        Command::Account { config } => account::account(&config),
        Command::Kappa { config } => kappa::kappa(&config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
