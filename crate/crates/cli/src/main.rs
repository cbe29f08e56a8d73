mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command, ExperimentCommand};
use config::FileConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mgpert::Error),

    #[error("config file {path}: {msg}")]
    Config { path: String, msg: String },

    #[error("{path}: {source}")]
    Path {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Usage(String),

    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),

    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Core(mgpert::Error::DegenerateParams { .. }) => 3,
            CliError::Core(mgpert::Error::NoConvergence { .. } | mgpert::Error::QuadratureNotConverged { .. }) => 4,
            _ => 2,
        }
    }
}

fn run(cli: &Cli, file: &FileConfig) -> Result<String, CliError> {
    match &cli.command {
        Command::Price(a) => commands::price(a, file),
        Command::McPrice(a) => commands::mc_price(a, file),
        Command::OracleCheck(a) => {
            let outcome = commands::oracle_check(a, file)?;
            if outcome.failures.is_empty() {
                Ok(outcome.stdout)
            } else {
                print!("{}", outcome.stdout);
                Err(CliError::Check(outcome.failures.join("; ")))
            }
        }
        Command::Experiment(ExperimentCommand::Static(a)) => commands::experiment_static(a, file),
        Command::Experiment(ExperimentCommand::Timeseries(a)) => commands::experiment_timeseries(a, file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = FileConfig::load(cli.config.as_deref()).and_then(|file| {
        let threads = cli.threads.or(file.threads).unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        pool.install(|| run(&cli, &file))
    });
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mgpert: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
