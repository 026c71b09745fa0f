//! File formats, experiment runner and command-line plumbing around
//! `robustica-core`.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod format;
pub mod report;

pub use robustica_core as core;
