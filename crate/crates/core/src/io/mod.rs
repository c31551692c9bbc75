//! Configuration, field output and command-line commands.

pub mod commands;
pub mod config;
pub mod expr;
pub mod output;
