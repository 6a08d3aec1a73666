use std::process::ExitCode;

use clap::Parser;
use nubs_harness::cli::{build_config, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match build_config(&cli).and_then(|raw| nubs_harness::execute(&raw)) {
        Ok((_, manifest)) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
