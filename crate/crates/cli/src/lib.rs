//! Command-line front end: rate certification, condition-number sweeps,
//! certificate checks and simulation.

pub mod args;
pub mod commands;
pub mod grid;
pub mod table;

use args::{Cli, Command};
use commands::Failure;

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Rate(a) => commands::rate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Check(a) => commands::check(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::RestartOpt(a) => commands::restart_opt(a),
    }
}
