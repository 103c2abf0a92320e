//! File formats and output encoding for the `train` binary: JSON
//! scenario configuration, chain files, trace dumps, and the JSON
//! result lines.

pub mod chain_file;
pub mod config;
pub mod output;
pub mod trace_file;
