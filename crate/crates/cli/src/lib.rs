//! Command-line front end: config parsing, experiment dispatch and
//! reproducible artifact output.

pub mod config;
pub mod output;
mod run;

pub use run::{execute, resolve_config, ExitStatus, RunOutcome, RunRequest};
