//! File formats, the parallel simulation harness and the command line
//! around `rtl_core`.

pub mod cli;
pub mod csv_io;
pub mod error;
pub mod files;
pub mod harness;
pub mod split;

pub use cli::run_cli;
pub use error::{CliError, Result};
