//! Experiment orchestration, statistics, output formats and the command line.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod output;
pub mod stats;
