//! Command-line surface for compositional time-series model fitting,
//! forecasting, evaluation, simulation studies, and validation sweeps.

mod commands;
mod config;
mod errors;
mod io;

use clap::{Parser, Subcommand};

use crate::errors::CliResult;

#[derive(Parser)]
#[command(
    name = "bdarch",
    version,
    about = "Bayesian Dirichlet ARMA models with dynamic precision for compositional time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one of the six simulation studies and write its reports.
    Simulate(commands::simulate::SimulateArgs),
    /// Fit a model to a share table and write draws plus diagnostics.
    Fit(commands::fit::FitArgs),
    /// Simulate the posterior predictive from a saved fit.
    Forecast(commands::forecast::ForecastArgs),
    /// Score a forecast file against realized shares.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Two-stage validation-grid model selection.
    Sweep(commands::sweep::SweepArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Forecast(args) => commands::forecast::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code);
        }
    }
}
