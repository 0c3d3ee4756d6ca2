//! Command-line driver: preprocessing, synthetic data, training with
//! validation-based λ selection, forecasting, evaluation and benchmarking.

pub mod artifact;
pub mod bench;
pub mod cli;
pub mod commands;
pub mod experiment;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use loadcast::Error;

use cli::{Cli, Command};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Exit status for a library error: 1 bad arguments, 2 bad data, 3 numerics.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        e if e.is_numeric() => EXIT_NUMERIC,
        Error::Syntax { .. } | Error::Validation(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

pub fn execute(command: &Command) -> loadcast::Result<()> {
    match command {
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Bench(a) => commands::bench(a),
    }
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
