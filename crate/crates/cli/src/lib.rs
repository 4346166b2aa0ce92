//! Command-line front end, file formats and parallel drivers for
//! [`firstreturn_core`].

pub mod app;
pub mod graph_file;
pub mod output;
pub mod parallel;

pub use app::{run, Cli, CliError};
