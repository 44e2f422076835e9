//! Library side of the `lamel` command-line tool, exposed so integration
//! tests can drive the harness directly.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod experiment;
