//! Command-line orchestration for `isingkit`: instance generation, solver
//! runs, benchmark curves, thermometry and annealing simulation, all
//! exchanged as hashed JSON/COO artifacts.

pub mod args;
pub mod bench;
pub mod commands;
pub mod error;
pub mod io;
pub mod records;

pub use error::{CliError, CliResult};

use args::{Cli, Command};

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Solve(a) => commands::solve(a),
        Command::Bench(a) => commands::bench(a),
        Command::Thermo(a) => commands::thermo(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Metrics(a) => commands::metrics(a),
    }
}
