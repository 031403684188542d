use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = msecg_cli::Cli::parse();
    match msecg_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
