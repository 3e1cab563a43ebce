mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// Failure surfaced to the user as one `error: kind=<kind> msg="<text>"` line.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub msg: String,
}

impl CliError {
    pub fn new(kind: &'static str, msg: impl Into<String>) -> Self {
        Self {
            kind,
            msg: msg.into(),
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self::new("usage", msg)
    }
}

impl From<asyncdepth::Error> for CliError {
    fn from(e: asyncdepth::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn report(e: &CliError) {
    eprintln!("error: kind={} msg={:?}", e.kind, e.msg);
}

fn init_threads(flag: Option<usize>) -> CliResult<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var("ASYNCDEPTH_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::usage(format!(
                    "ASYNCDEPTH_THREADS must be a thread count, got `{v}`"
                ))
            })?),
            _ => None,
        },
    };
    if let Some(n) = threads.filter(|n| *n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("threads", e.to_string()))?;
    }
    Ok(())
}

fn run() -> CliResult<()> {
    let argv: Vec<String> = std::env::args().collect();
    let argv = config::apply_config_file(&Cli::command(), argv)?;
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let text = e.to_string();
            let first = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| {
                    !l.is_empty()
                        && !l.starts_with("For more information")
                        && !l.starts_with("tip:")
                })
                .collect::<Vec<_>>()
                .join(" ");
            let first = first.trim_start_matches("error: ");
            return Err(CliError::usage(first));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::usage(e.to_string()))?;
    init_threads(cli.threads)?;
    match cli.command {
        Command::BuildStore(a) => commands::build_store(&a),
        Command::Render(a) => commands::render(&a),
        Command::Featurize(a) => commands::featurize(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Score(a) => commands::score(&a),
        Command::Synth(a) => commands::synth(&a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(if e.kind == "usage" { 2 } else { 1 })
        }
    }
}
