use std::process::ExitCode;

use clap::Parser;
use stonethrow::cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = match execute(&cli) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code as u8);
        }
    };
    let written = match &cli.out {
        Some(path) => std::fs::write(path, output).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(output.as_bytes()).map_err(|e| e.to_string())
        }
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
