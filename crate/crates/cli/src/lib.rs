//! Command-line front end of the `eegstage` pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod study;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command};
pub use config::PipelineConfig;
pub use error::{CliError, CliResult, ExitStatus};

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Results go to `out`, progress and errors to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    ExitStatus::Usage as i32
                }
            };
        }
    };
    match execute(&cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.status as i32
        }
    }
}

pub fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Synth(a) => commands::synth(a, out),
        Command::IngestCheck(a) => commands::ingest_check(a, out),
        Command::Bandselect(a) => commands::bandselect(a, out, err),
        Command::Featurize(a) => commands::featurize(a, out, err),
        Command::Classify(a) => commands::classify(a, out, err),
        Command::Report(a) => report::report(a, out),
    }
}
