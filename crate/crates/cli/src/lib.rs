//! Library side of the `tweetact` binary.

pub mod commands;
pub mod config;
pub mod log;

pub use config::RunConfig;
