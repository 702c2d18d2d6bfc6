use std::process::ExitCode;

use clap::Parser;
use groundfit_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GROUNDFIT_LOG", "warn")).init();
    let cli = Cli::parse();
    ExitCode::from(run(cli))
}
