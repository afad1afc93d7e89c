//! Command drivers chaining the kdvision modules: analyze an image,
//! catalog it into an archive, index, query, render and classify.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod store;

pub use error::{CliError, CliResult};
