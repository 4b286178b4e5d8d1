use std::process::ExitCode;

use clap::Parser;

use eebench::commands::{self, Cli, Command};
use eebench::{Outcome, UsageError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => commands::cmd_run(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
        Command::Reproduce(args) => commands::cmd_reproduce(args),
        Command::GenSynth(args) => commands::cmd_gen_synth(args),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::from(0),
        Ok(Outcome::Partial) => {
            eprintln!("completed with partial failures; outputs retained");
            ExitCode::from(1)
        }
        Err(e) => {
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("{e}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}
