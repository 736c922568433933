//! Library half of the `susmap` command-line tool: configuration schema and
//! pipeline stages, exposed so integration tests can drive runs in-process.

pub mod config;
pub mod pipeline;
