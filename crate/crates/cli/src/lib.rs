//! Command-line workflows around `frem-core`: the estimator simulation study,
//! training and auditing fair models on CSV data, and a gradient self-check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod io;
pub mod model;

pub use crate::commands::{run, Cli};
pub use crate::error::{CliError, CliResult};
