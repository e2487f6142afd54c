//! Command-line front end for the `tcpspread` library.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod output;
pub mod reproduce;

use std::ffi::OsString;

use clap::Parser;

pub use output::Failure;

/// Parses `argv` and runs the command. Output goes to stdout, diagnostics
/// to stderr; the return value is the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            if !matches!(f, Failure::Verification(_)) {
                eprintln!("error: {f}");
            }
            f.exit_code()
        }
    }
}

pub fn run(command: args::Command) -> Result<(), Failure> {
    use args::Command::*;
    match command {
        Solve(a) => commands::solve(&a),
        Simulate(a) => commands::simulate(&a),
        Analyze(a) => commands::analyze(&a),
        Reproduce(a) => reproduce::reproduce(&a),
        Verify(a) => commands::verify(&a),
    }
}
