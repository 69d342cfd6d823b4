mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use unli_core::config::ToolkitConfig;

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => ToolkitConfig::load(path)?,
        None => ToolkitConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => commands::ingest(a, &config),
        Command::Batch(a) => commands::batch(a, &config),
        Command::Aggregate(a) => commands::aggregate(a, &config),
        Command::QualifyScore(a) => commands::qualify_score(a, &config),
        Command::FitSurrogate(a) => commands::fit_surrogate_cmd(a, &config),
        Command::Featurize(a) => commands::featurize(a, &config),
        Command::Train(a) => commands::train_cmd(a, &config),
        Command::Eval(a) => commands::eval(a, &config),
        Command::Report(a) => commands::report(a, &config),
        Command::Serve(a) => commands::serve(a, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
