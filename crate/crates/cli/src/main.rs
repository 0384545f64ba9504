use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod error;
mod manifest;
mod plot;
mod sweep;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "sppdon", version, about = "DeepONet surrogates for singularly perturbed convection-diffusion problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample forcings, solve on a fine mesh and write a dataset
    GenData(commands::GenData),
    /// Train a DeepONet on a dataset
    Train(commands::Train),
    /// Score a trained model by the weighted empirical risk
    Eval(commands::Eval),
    /// Held-out risk against epsilon for each mesh kind
    SweepEps(sweep::SweepEps),
    /// Held-out risk against sample count or location count
    SweepSize(sweep::SweepSize),
    /// Evaluate a model for one forcing on a grid
    Predict(commands::Predict),
    /// Render a tidy CSV as an SVG line chart
    Plot(plot::Plot),
    /// Re-run a command from its manifest and verify the outputs
    Replay(manifest::Replay),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(c) => manifest::record(c),
        Command::Train(c) => manifest::record(c),
        Command::Eval(c) => manifest::record(c),
        Command::SweepEps(c) => manifest::record(c),
        Command::SweepSize(c) => manifest::record(c),
        Command::Predict(c) => manifest::record(c),
        Command::Plot(c) => manifest::record(c),
        Command::Replay(r) => r.run(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
