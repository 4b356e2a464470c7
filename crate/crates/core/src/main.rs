use std::process::ExitCode;

use clap::Parser;
use colosim::cli::{dispatch, exit_code, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("colosim: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
