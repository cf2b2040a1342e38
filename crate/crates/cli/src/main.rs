//! `sgval`: train, detect, relabel, retrain, evaluate.
//!
//! Every subcommand is a thin shell around the library: parse flags, read
//! artifacts, call one stage, write artifacts. All randomness flows from
//! `--seed`, so any command rerun with the same flags reproduces its output
//! files byte for byte regardless of `--threads`.

mod args;
mod cmds;

use std::process::ExitCode;

use clap::Parser;
use sgval_core::Error;

use args::Cli;

/// Exit codes promised in `--help`: 0 ok, 2 usage, 3 bad data or file,
/// 4 numeric divergence.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::KOutOfRange { .. } => 2,
        Error::Divergence { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let argv = match args::with_config_defaults(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        // clap prints help/version on stdout with status 0 and usage
        // errors on stderr with status 2.
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    match cmds::run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(staged) => {
            eprintln!("error[{}]: {}", staged.stage, staged.err);
            ExitCode::from(exit_code(&staged.err))
        }
    }
}

/// A stage failure with enough context to say which step died.
pub struct StagedError {
    pub stage: &'static str,
    pub err: Error,
}

pub trait Stage<T> {
    fn stage(self, name: &'static str) -> Result<T, StagedError>;
}

impl<T> Stage<T> for sgval_core::Result<T> {
    fn stage(self, name: &'static str) -> Result<T, StagedError> {
        self.map_err(|err| StagedError { stage: name, err })
    }
}
