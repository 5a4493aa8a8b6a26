//! Subcommands and exporters behind the `nullcurve` binary.

pub mod commands;
pub mod export;
