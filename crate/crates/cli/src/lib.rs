//! Command line and HTTP front end for copydial models.

pub mod commands;
pub mod http;

pub use commands::{run, Cli, Command};
