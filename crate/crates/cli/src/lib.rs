//! File formats, run manifests and the command-line harness around
//! `weavelab-core`.

pub mod commands;
pub mod dataset;
pub mod format;
pub mod manifest;

pub use commands::{execute, Cli, Command, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
