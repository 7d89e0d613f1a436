mod args;
mod commands;
mod manifest;
mod schedule;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Exit status for runs that finished but left warnings, such as a solve
/// that hit its iteration limit.
const EXIT_WARNINGS: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational =
                matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    if let Err(e) = configure_threads(cli.jobs) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }

    match run(cli.command) {
        Ok(outcome) if outcome.warnings.is_empty() => ExitCode::SUCCESS,
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(EXIT_WARNINGS)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> anyhow::Result<commands::Outcome> {
    match command {
        Command::Rerun(a) => commands::rerun(&a),
        other => commands::execute(other.with_env_seed()),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(jobs: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = jobs {
        anyhow::ensure!(n >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(jobs: Option<usize>) -> anyhow::Result<()> {
    if jobs.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; --jobs is ignored");
    }
    Ok(())
}
