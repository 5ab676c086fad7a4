//! Command-line interface and HTTP service.

pub mod api;
pub mod commands;
pub mod config;
pub mod error;
pub mod feedback;
pub mod live_search;
pub mod resources;
pub mod service;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use error::{CliResult, Failure};

/// Parses arguments and runs; errors become one JSON line on `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ").to_string();
            let f = Failure::usage(first);
            let _ = writeln!(err, "{}", f.to_json_line());
            return f.exit_code();
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log).target(env_logger::Target::Stderr).try_init();
    match commands::run(cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "{}", f.to_json_line());
            f.exit_code()
        }
    }
}
