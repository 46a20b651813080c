mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Why a command failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, files or shapes: exit 2.
    Input(String),
    /// Solver or sampling failure: exit 3.
    Numerical(String),
}

impl From<hdinfer::error::Error> for Failure {
    fn from(e: hdinfer::error::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let result = match cli.command {
        Command::Infer(a) => a.resolve().and_then(commands::infer),
        Command::Simulate(a) => a.resolve().and_then(commands::simulate),
        Command::Oracle(a) => a.resolve().and_then(commands::oracle),
        Command::BasisPursuit(a) => a.resolve().and_then(commands::basis_pursuit),
        Command::SparsityCurve(a) => a.resolve().and_then(commands::sparsity_curve_cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Numerical(msg)) = &f;
            eprintln!("hdinfer {name}: error: {msg}");
            ExitCode::from(f.exit_code())
        }
    }
}
