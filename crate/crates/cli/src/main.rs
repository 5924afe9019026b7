use std::process::ExitCode;

use clap::Parser;
use qdphase_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QDPHASE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            println!("wrote {} file(s) to {}", files.len(), cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
