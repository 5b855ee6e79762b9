//! Library half of the `difflm` binary: config resolution and command
//! dispatch, exposed so integration tests can drive whole pipelines.

pub mod config;
pub mod dispatch;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use dispatch::dispatch;
