//! Library half of the `blksurv` command-line tool: configuration, CSV
//! input/output and the subcommands, kept separate from argument parsing so
//! they can be tested in-process.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
