//! The `resgene` command line: data synthesis, encoding, cross-validated
//! training, grid tuning and cross-model reports.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage
//! error.

pub mod args;
mod commands;
mod error;
pub mod grid;
pub mod run_result;

use std::ffi::OsString;

use clap::Parser;

pub use commands::TUNE_SCHEMA;
pub use error::{CliError, Result};

use args::{Cli, Command};

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let env = env_logger::Env::default().filter_or("RESGENE_LOG", level);
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => commands::synth(a),
        Command::Encode(a) => commands::encode(a),
        Command::Train(a) => commands::train(a),
        Command::Tune(a) => commands::tune(a),
        Command::Report(a) => commands::report(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run with --help for usage");
            }
            e.exit_code()
        }
    }
}
