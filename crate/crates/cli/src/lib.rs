//! Command-line pipeline: synthetic data, preprocessing, alignment, teacher
//! distributions, training, summarization, evaluation and gradient checking.
//! Stages talk to each other only through files in the work directory.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use cli::{run, Cli};
pub use config::RunConfig;
pub use error::{CliError, Result};
