//! Command implementations behind the `oodseg` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{RunConfig, ScoreSelection};
pub use error::CliError;
