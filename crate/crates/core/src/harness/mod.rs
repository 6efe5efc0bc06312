//! Benchmark orchestration and the command-line front end.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod sweep;
