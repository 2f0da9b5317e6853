//! The `commeig` command-line tool.

pub mod commands;
pub mod doc;
