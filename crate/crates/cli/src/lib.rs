//! The `ciaftp` command line: kernel specs in, CSV and JSON out.

pub mod commands;
pub mod spec;

use std::io::Write;

use clap::Parser;

pub use commands::{execute, Cli, CliError, Outcome};
pub use spec::{parse_kernel_spec, LoadedKernel, SpecError};

/// Parses `args`, runs the command, writes its output, and returns the exit status.
pub fn main_with<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let _ = writeln!(stderr, "{}", CliError::new("usage", first, 2).line());
            return 2;
        }
    };
    let out_path = commands::out_path(&cli).map(|p| p.to_path_buf());
    match execute(cli) {
        Ok(outcome) => {
            let written = match &out_path {
                Some(p) => std::fs::write(p, &outcome.output),
                None => stdout.write_all(outcome.output.as_bytes()),
            };
            for n in &outcome.notes {
                let _ = writeln!(stderr, "{n}");
            }
            if let Err(e) = written {
                let _ = writeln!(stderr, "{}", CliError::new("write_failed", e.to_string(), 1).line());
                return 1;
            }
            outcome.exit
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.line());
            e.exit
        }
    }
}
