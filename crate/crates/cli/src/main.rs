//! `clustercrop` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 missing input file, 4 malformed
//! input or failed write. Log verbosity comes from `CLUSTERCROP_LOG`.

mod args;
mod commands;
mod plot;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Missing(String),
    #[error("{0}")]
    Format(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Format(_) => 4,
        }
    }
}

impl From<clustercrop::FormatError> for CliError {
    fn from(e: clustercrop::FormatError) -> Self {
        match &e {
            clustercrop::FormatError::Io { source, .. }
                if source.kind() == std::io::ErrorKind::NotFound =>
            {
                CliError::Missing(e.to_string())
            }
            _ => CliError::Format(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CLUSTERCROP_LOG", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("clustercrop: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clustercrop: {e}");
            ExitCode::from(e.code())
        }
    }
}
