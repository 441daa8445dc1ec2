//! Command-line front end: model-spec parsing and validation, the command
//! implementations, and the report envelope they all emit.

pub mod commands;
pub mod modelspec;
pub mod report;
