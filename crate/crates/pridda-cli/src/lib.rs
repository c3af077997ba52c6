//! Library surface of the pridda command-line tool, exposed so integration
//! tests can drive the command implementations directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
