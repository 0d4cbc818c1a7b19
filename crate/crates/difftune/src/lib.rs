//! File formats, run configuration and the `difftune` command line on top
//! of [`difftune_core`].

pub mod cli;
pub mod config;
pub mod format;
pub mod report;

pub use difftune_core as core;
