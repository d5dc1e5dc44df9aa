//! `sharprd` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation
//! infeasible.

mod args;
mod commands;
mod render;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use sharprd::{ErrorClass, RdError};

use args::{Cli, Command};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }
}

impl From<RdError> for CliError {
    fn from(e: RdError) -> Self {
        let code = match e.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Infeasible => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn output_path(cmd: &Command) -> Option<&std::path::Path> {
    match cmd {
        Command::Estimate(a) => a.output.output.as_deref(),
        Command::Bandwidth(a) => a.output.output.as_deref(),
        Command::Locrand(a) => a.output.output.as_deref(),
        Command::Window(a) => a.output.output.as_deref(),
        Command::Falsify(a) => a.output.output.as_deref(),
        Command::Plot(a) => a.output.as_deref(),
        Command::Simulate(a) => a.output.output.as_deref(),
    }
}

fn dispatch(cmd: &Command) -> Result<String, CliError> {
    match cmd {
        Command::Estimate(a) => commands::estimate_cmd(a),
        Command::Bandwidth(a) => commands::bandwidth_cmd(a),
        Command::Locrand(a) => commands::locrand_cmd(a),
        Command::Window(a) => commands::window_cmd(a),
        Command::Falsify(a) => commands::falsify_cmd(a),
        Command::Plot(a) => commands::plot_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
    }
}

#[cfg(feature = "parallel")]
fn run_with_threads(threads: Option<usize>, cmd: &Command) -> Result<String, CliError> {
    match threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("cannot start {n} threads: {e}")))?
            .install(|| dispatch(cmd)),
        None => dispatch(cmd),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_threads(threads: Option<usize>, cmd: &Command) -> Result<String, CliError> {
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    dispatch(cmd)
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err(CliError::usage(String::new()))
            };
        }
    };
    let text = run_with_threads(cli.threads, &cli.command)?;
    match output_path(&cli.command) {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::data(format!("cannot write output: {e}"))),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
