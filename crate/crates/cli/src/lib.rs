//! File formats and subcommands behind the `monomdp` binary.

pub mod args;
pub mod commands;
pub mod error;
pub mod files;

pub use args::Cli;
pub use commands::run;
pub use error::CliError;
