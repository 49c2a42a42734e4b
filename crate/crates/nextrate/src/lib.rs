//! Files, worker pool and command line around `nextrate-core`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod format;
pub mod manifest;
pub mod pool;
pub mod settings;
pub mod verify;

pub use error::{CliError, CliResult};

use cli::{Cli, Command};

/// Runs a parsed command line and returns the files it wrote.
pub fn run(cli: &Cli) -> CliResult<Vec<std::path::PathBuf>> {
    match &cli.command {
        Command::Dataset(a) => commands::cmd_dataset(a),
        Command::Train(a) => commands::cmd_train(a),
        Command::Generate(a) => commands::cmd_generate(a),
        Command::Flops(a) => commands::cmd_flops(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Verify(a) => commands::cmd_verify(a),
    }
}
