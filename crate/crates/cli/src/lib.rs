//! Configuration, sweeps, gate runs and figure reproduction on top of
//! `cqed-core`. The `cqed` binary parses arguments and writes files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod reproduce;

pub use crate::error::{CliError, Result};
