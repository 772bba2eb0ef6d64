//! Library surface of the laboratory driver; the binary is a thin wrapper.

pub mod commands;
pub mod config;
pub mod snapshot;
