//! `soda` command-line front end.

mod args;
mod commands;
mod error;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Infer { inputs, no_samples } => commands::cmd_infer(g, inputs, *no_samples),
        Command::Surface { x, y, surface } => commands::cmd_surface(g, x, y, surface),
        Command::Classify {
            inputs,
            repeats,
            localize,
            surface,
        } => commands::cmd_classify(g, inputs, *repeats, *localize, surface),
        Command::Synth { spec, per_class, pair } => commands::cmd_synth(g, spec, *per_class, *pair),
        Command::Validate { inputs } => commands::cmd_validate(g, inputs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ").trim();
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(CliError::Usage(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
