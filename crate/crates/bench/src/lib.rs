//! Weight files, benchmark sweeps, scaling fits and reports for `merge-core`.
//!
//! The `merge-bench` binary wraps [`commands`]; every command is also a plain
//! function so tests and other tools can call it directly.

pub mod clock;
pub mod commands;
pub mod error;
pub mod format;
pub mod report;

pub use error::{BenchError, Result};
