use std::process::ExitCode;

use clap::Parser;
use isingkit_cli::args::Cli;

/// Environment variable bounding the worker pool.
const THREADS_VAR: &str = "ISINGKIT_THREADS";

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // Fails only if a pool already exists, which cannot happen here.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    match isingkit_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
