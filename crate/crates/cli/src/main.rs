use std::fs::File;
use std::io::{self, BufWriter};
use std::process::ExitCode;

use clap::Parser;
use levykit_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.common.out {
        Some(path) => File::create(path)
            .map_err(CliError::from)
            .and_then(|f| run(&cli, &mut BufWriter::new(f))),
        None => run(&cli, &mut BufWriter::new(io::stdout().lock())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levykit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
