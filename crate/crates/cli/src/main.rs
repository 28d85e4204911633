use std::io;
use std::process::ExitCode;

use clap::Parser;
use crsn_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(execute(cli, &mut io::stdout(), &mut io::stderr()))
}
