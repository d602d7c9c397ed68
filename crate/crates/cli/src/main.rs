#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, Format};

const EXIT_USAGE: u8 = 1;
const EXIT_LIMIT: u8 = 2;
const EXIT_CHECK: u8 = 3;

fn default_format(cmd: &Command) -> Format {
    match cmd {
        Command::Nonhyper(_) => Format::Json,
        _ => Format::Csv,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let common = cli.command.common();
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("qcs: cannot set thread count: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let run = match commands::run(&cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("qcs: {e}");
            return ExitCode::from(if e.is_resource_limit() { EXIT_LIMIT } else { EXIT_USAGE });
        }
    };
    let text = run.artifact.render(common.format.unwrap_or_else(|| default_format(&cli.command)));
    let written = match &common.out {
        Some(path) => std::fs::write(path, text.as_bytes()),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("qcs: cannot write output: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    if run.check {
        ExitCode::SUCCESS
    } else {
        eprintln!("qcs: {} check failed", cli.command.name());
        ExitCode::from(EXIT_CHECK)
    }
}
