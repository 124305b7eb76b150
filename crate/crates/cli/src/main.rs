use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tfr::commands::{self, CompareArgs, EvalArgs, GenerateArgs, ObserveArgs, PlotArgs, TrainArgs};

/// Temperature-field reconstruction from sparse sensor readings.
#[derive(Parser)]
#[command(name = "tfr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve random (or all on/off) power assignments into a dataset file.
    Generate(GenerateArgs),
    /// Choose sensor locations and write a plan file.
    Observe(ObserveArgs),
    /// Fit a UNet, patch MLP or fully connected baseline.
    Train(TrainArgs),
    /// Score a model or interpolation baseline on a dataset split.
    Eval(EvalArgs),
    /// Put several eval runs side by side.
    Compare(CompareArgs),
    /// Field maps and a bottom-edge profile for one sample.
    Plot(PlotArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a).map(drop),
        Command::Observe(a) => commands::observe(a).map(drop),
        Command::Train(a) => commands::train(a).map(drop),
        Command::Eval(a) => commands::eval(a).map(drop),
        Command::Compare(a) => commands::compare(a).map(drop),
        Command::Plot(a) => commands::plot(a).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
