//! `qac`: training, ablation grid, EMD study and the oracle self-checks.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes shared by every subcommand.
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_PROPERTY: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qac", version, about = "Distributional actor-critic laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one agent from a JSON config.
    Train(commands::TrainArgs),
    /// Run all five variants over paired seeds and summarize final returns.
    Ablate(commands::AblateArgs),
    /// Compare a checkpoint's return distribution against policy rollouts.
    Emd(commands::EmdArgs),
    /// Contraction and fixed-point checks of the distributional operator.
    DpCheck(commands::DpCheckArgs),
    /// Finite-difference validation of every loss gradient.
    GradCheck(commands::GradCheckArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Emd(a) => commands::emd(a),
        Command::DpCheck(a) => commands::dp_check(a),
        Command::GradCheck(a) => commands::grad_check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
