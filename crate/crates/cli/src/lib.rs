//! Subcommands behind the `qosmc` binary.

pub mod error;
pub mod report;
pub mod run;
pub mod train;

pub use error::{CliError, CliResult};
